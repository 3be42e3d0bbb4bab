"""End-to-end verification runs used by the ``verify-train`` command and the tests."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..partitioner import DatasetSpec, PartitionPlan, balance_epoch
from .model import init_mlp
from .training import (
    LrSchedule,
    TrainRun,
    evaluate,
    make_task,
    make_workers,
    train_distributed,
    train_single,
)


@dataclass(frozen=True)
class VerifyConfig:
    seed: int = 0
    layer_dims: tuple[int, ...] = (8, 16, 2)
    activation: str = "tanh"
    # Host-like worker plus five CSD-like workers; total 40.
    batches: dict = field(default_factory=lambda: {"host": 20, **{f"csd{i}": 4 for i in range(5)}})
    public_samples: int = 4000
    private_per_csd: int = 400
    test_samples: int = 1000
    separation: float = 1.0
    steps: int = 500
    base_lr: float = 0.05
    scale_factor: float = 2.0
    warmup_steps: int = 50
    schedule_mode: str = "warmup_then_scaled"
    loss_tolerance: float = 0.01

    @property
    def schedule(self) -> LrSchedule:
        return LrSchedule(self.base_lr, self.scale_factor, self.warmup_steps, self.schedule_mode)

    def to_json(self) -> dict:
        out = asdict(self)
        out["layer_dims"] = list(self.layer_dims)
        out["batches"] = dict(sorted(self.batches.items()))
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "VerifyConfig":
        obj = dict(obj)
        if "layer_dims" in obj:
            obj["layer_dims"] = tuple(obj["layer_dims"])
        return cls(**obj)


def private_owners(cfg: VerifyConfig) -> list[str]:
    return sorted(n for n in cfg.batches if n != "host")


def build_dataset(cfg: VerifyConfig):
    """Training pool laid out as [public | private of owner 0 | private of owner 1 | ...]."""
    owners = private_owners(cfg)
    n_train = cfg.public_samples + cfg.private_per_csd * len(owners)
    X, y = make_task(n_train, cfg.layer_dims[0], seed=cfg.seed, separation=cfg.separation)
    Xt, yt = make_task(cfg.test_samples, cfg.layer_dims[0], seed=cfg.seed + 1_000_003, separation=cfg.separation)
    spec = DatasetSpec(cfg.public_samples, {o: cfg.private_per_csd for o in owners})
    offsets = {o: cfg.public_samples + i * cfg.private_per_csd for i, o in enumerate(owners)}
    return X, y, Xt, yt, spec, offsets


def plan_shards(plan: PartitionPlan, private_offset: dict[str, int], seed: int = 0) -> dict[str, np.ndarray]:
    """Map a partition plan onto sample indices, shuffled per node with a fixed seed."""
    shards = {}
    for n, a in sorted(plan.per_node.items()):
        base = private_offset.get(a.private_owner, 0)
        priv = np.arange(base, base + a.private_assigned)
        pub = np.arange(*a.public_range)
        dup = priv[np.arange(a.duplicated_private) % max(a.private_assigned, 1)] if a.duplicated_private else priv[:0]
        idx = np.concatenate([priv, pub, dup]).astype(np.int64)
        shards[n] = np.random.default_rng([seed, len(shards)]).permutation(idx)
    return shards


def relative_distance(a: np.ndarray, b: np.ndarray) -> float:
    scale = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / scale) if scale else float(np.linalg.norm(a - b))


def equivalence_run(
    X, y, layer_dims, shards, batches, schedule: LrSchedule, steps: int, seed: int = 0, activation: str = "tanh"
) -> tuple[float, TrainRun, TrainRun]:
    """Distributed weighted SGD versus single-node SGD on the per-step union batch.

    Returns the largest per-step relative parameter distance.
    """
    model = init_mlp(layer_dims, seed=seed, activation=activation)
    dist = train_distributed(make_workers(model, shards, batches), X, y, schedule, steps, keep_history=True)
    single = train_single(model, X, y, schedule, dist.batches, keep_history=True)
    worst = max(relative_distance(a, b) for a, b in zip(dist.history, single.history))
    return worst, dist, single


def parity_run(cfg: VerifyConfig) -> dict:
    """Many-worker vs one-worker training on the fixed synthetic task."""
    X, y, Xt, yt, spec, offsets = build_dataset(cfg)
    plan = balance_epoch(cfg.batches, spec)
    shards = plan_shards(plan, offsets, cfg.seed)
    model = init_mlp(cfg.layer_dims, seed=cfg.seed, activation=cfg.activation)
    sched = cfg.schedule
    total = sum(cfg.batches.values())

    dist = train_distributed(make_workers(model, shards, cfg.batches), X, y, sched, cfg.steps, plan=plan)
    single = train_single(model, X, y, sched, dist.batches)
    uniform = train_distributed(make_workers(model, shards, cfg.batches), X, y, sched, cfg.steps, weighted=False)

    # One node drawing its own equally sized batches from the whole pool.
    perm = np.random.default_rng([cfg.seed, 7]).permutation(X.shape[0])
    own_order = [perm[(np.arange(total) + total * k) % X.shape[0]] for k in range(cfg.steps)]
    independent = train_single(model, X, y, sched, own_order)

    def summary(run: TrainRun) -> dict:
        train_loss, _ = evaluate(run.model, X, y)
        test_loss, test_acc = evaluate(run.model, Xt, yt)
        return {"train_loss": train_loss, "test_loss": test_loss, "test_accuracy": test_acc}

    d, s, u, ind = summary(dist), summary(single), summary(uniform), summary(independent)

    def rel(a, b):
        return abs(a - b) / abs(b)

    return {
        "epoch_steps": plan.epoch_steps,
        "distributed": d,
        "single": s,
        "uniform": u,
        "single_independent_order": ind,
        "loss_rel_diff": rel(d["train_loss"], s["train_loss"]),
        "accuracy_equal": d["test_accuracy"] == s["test_accuracy"],
        "uniform_loss_rel_diff": rel(u["train_loss"], s["train_loss"]),
        "independent_loss_rel_diff": rel(d["train_loss"], ind["train_loss"]),
        "passed": rel(d["train_loss"], s["train_loss"]) <= cfg.loss_tolerance
        and d["test_accuracy"] == s["test_accuracy"],
        "trace": dist,
    }


def random_equivalence_case(rng: np.random.Generator, steps: int = 100):
    """One random tiny task with a random heterogeneous batch split."""
    n_workers = int(rng.integers(2, 7))
    total = int(rng.integers(n_workers, 65))
    cuts = np.sort(rng.choice(np.arange(1, total), size=n_workers - 1, replace=False))
    sizes = np.diff(np.concatenate([[0], cuts, [total]])).astype(int)
    dims = [int(rng.integers(2, 17))]
    dims += [int(rng.integers(2, 17)) for _ in range(int(rng.integers(0, 2)))]
    dims.append(int(rng.integers(2, 5)))
    activation = "tanh" if rng.random() < 0.5 else "relu"
    n = int(rng.integers(total, 4 * total + 1))
    X = rng.normal(size=(n, dims[0]))
    y = rng.integers(0, dims[-1], size=n)
    perm = rng.permutation(n)
    bounds = np.linspace(0, n, n_workers + 1).astype(int)
    batches = {f"w{i}": int(sizes[i]) for i in range(n_workers)}
    shards = {f"w{i}": perm[bounds[i] : bounds[i + 1]] for i in range(n_workers)}
    lr = float(rng.uniform(0.01, 0.2))
    schedule = LrSchedule(lr, 2.0, 20, "warmup_then_scaled")
    seed = int(rng.integers(0, 2**31))
    return X, y, tuple(dims), shards, batches, schedule, steps, seed, activation
