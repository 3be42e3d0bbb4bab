"""Synchronous data-parallel SGD over simulated workers with heterogeneous batches."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from .collective import weighted_allreduce
from .model import MlpModel, forward_backward, loss_only

TRACE_HEADER = ("step", "lr", "worker_count", "total_batch", "loss")


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float
    scale_factor: float = 1.0
    warmup_steps: int = 0
    mode: str = "constant"

    def __post_init__(self):
        if self.base_lr <= 0 or self.scale_factor <= 0:
            raise ValidationError("base_lr and scale_factor must be positive")
        if self.warmup_steps < 0:
            raise ValidationError("warmup_steps must be >= 0")
        if self.mode not in ("constant", "linear_scaled", "warmup_then_scaled"):
            raise ValidationError(f"unknown schedule mode {self.mode!r}")

    def to_json(self) -> dict:
        return {
            "base_lr": self.base_lr,
            "scale_factor": self.scale_factor,
            "warmup_steps": self.warmup_steps,
            "mode": self.mode,
        }


def lr_at(schedule: LrSchedule, step: int) -> float:
    if step < 0:
        raise ValueError("step must be >= 0")
    if schedule.mode == "constant":
        return schedule.base_lr
    target = schedule.base_lr * schedule.scale_factor
    if schedule.mode == "linear_scaled" or step >= schedule.warmup_steps:
        return target
    frac = step / schedule.warmup_steps
    return schedule.base_lr + frac * (target - schedule.base_lr)


@dataclass
class WorkerState:
    worker_id: str
    batch_size: int
    shard: np.ndarray
    model_replica: MlpModel
    cursor: int = 0

    def __post_init__(self):
        self.shard = np.asarray(self.shard, dtype=np.int64)
        if self.shard.size == 0:
            raise ValidationError(f"worker {self.worker_id}: empty shard")
        if self.batch_size < 1:
            raise ValidationError(f"worker {self.worker_id}: batch_size must be >= 1")

    def next_indices(self) -> np.ndarray:
        """The next ``batch_size`` shard entries, wrapping cyclically."""
        pos = (self.cursor + np.arange(self.batch_size)) % self.shard.size
        self.cursor = (self.cursor + self.batch_size) % self.shard.size
        return self.shard[pos]


@dataclass
class TraceRow:
    step: int
    lr: float
    worker_count: int
    total_batch: int
    loss: float


@dataclass
class TrainRun:
    model: MlpModel
    trace: list[TraceRow]
    # Per-step parameter vectors, kept only when requested.
    history: list[np.ndarray] = field(default_factory=list)
    # Sample indices used at each step, in worker order.
    batches: list[np.ndarray] = field(default_factory=list)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in self.trace:
            w.writerow([r.step, repr(r.lr), r.worker_count, r.total_batch, repr(r.loss)])
        return buf.getvalue()


def make_workers(model: MlpModel, shards: dict[str, np.ndarray], batches: dict[str, int]) -> list[WorkerState]:
    return [
        WorkerState(wid, int(batches[wid]), shards[wid], model.copy())
        for wid in sorted(batches)
    ]


def train_distributed(
    workers: list[WorkerState],
    X: np.ndarray,
    y: np.ndarray,
    schedule: LrSchedule,
    steps: int,
    plan=None,
    weighted: bool = True,
    keep_history: bool = False,
) -> TrainRun:
    """Synchronous SGD: every step all replicas apply the same reduced gradient."""
    if not workers:
        raise ValidationError("no workers")
    ref = workers[0].model_replica.weights.values
    for w in workers[1:]:
        if not np.array_equal(w.model_replica.weights.values, ref):
            raise ValidationError("worker replicas differ before training")
    if plan is not None:
        for w in workers:
            a = plan.per_node.get(w.worker_id)
            if a is None or a.batch_size != w.batch_size:
                raise ValidationError(f"worker {w.worker_id} does not match the partition plan")

    total_batch = sum(w.batch_size for w in workers)
    run = TrainRun(workers[0].model_replica, [])
    for step in range(steps):
        lr = lr_at(schedule, step)
        results, used = [], []
        for w in workers:
            idx = w.next_indices()
            used.append(idx)
            loss, grad = forward_backward(w.model_replica, X[idx], y[idx])
            results.append((loss, grad, w.batch_size))
        reduced = weighted_allreduce([(g, b) for _, g, b in results], weighted=weighted)
        loss = sum(part * b for part, _, b in results) / total_batch
        for w in workers:
            w.model_replica.weights.values -= lr * reduced.values
        for w in workers[1:]:
            if not np.array_equal(w.model_replica.weights.values, workers[0].model_replica.weights.values):
                raise RuntimeError(f"replica {w.worker_id} diverged at step {step}")
        run.trace.append(TraceRow(step, lr, len(workers), total_batch, float(loss)))
        run.batches.append(np.concatenate(used))
        if keep_history:
            run.history.append(workers[0].model_replica.weights.values.copy())
    run.model = workers[0].model_replica
    return run


def train_single(
    model: MlpModel,
    X: np.ndarray,
    y: np.ndarray,
    schedule: LrSchedule,
    index_batches,
    keep_history: bool = False,
) -> TrainRun:
    """Plain minibatch SGD over an explicit sequence of index batches."""
    model = model.copy()
    run = TrainRun(model, [])
    for step, idx in enumerate(index_batches):
        lr = lr_at(schedule, step)
        loss, grad = forward_backward(model, X[idx], y[idx])
        model.weights.values -= lr * grad.values
        run.trace.append(TraceRow(step, lr, 1, len(idx), loss))
        run.batches.append(np.asarray(idx))
        if keep_history:
            run.history.append(model.weights.values.copy())
    return run


def make_task(n_samples: int, dim: int = 8, seed: int = 0, separation: float = 1.0):
    """Two-class Gaussian mixture: each class is two isotropic blobs.

    Returns ``(X, y)`` with integer labels in {0, 1}.
    """
    rng = np.random.default_rng(seed)
    # Fixed component means drawn from their own stream so train and test agree.
    mrng = np.random.default_rng(12345)
    means = mrng.normal(size=(4, dim))
    means *= separation / np.linalg.norm(means, axis=1, keepdims=True)
    comp = rng.integers(0, 4, size=n_samples)
    X = means[comp] + rng.normal(size=(n_samples, dim))
    y = (comp % 2).astype(np.int64)
    return X, y


def evaluate(model: MlpModel, X, y) -> tuple[float, float]:
    """``(mean loss, argmax accuracy)``."""
    acc = float(np.mean(np.argmax(model.predict(X), axis=1) == y))
    return loss_only(model, X, y), acc
