"""Batch-size tuning for heterogeneous synchronous training.

The slowest node gets the candidate batch with the best throughput.  Every
faster node then starts from that batch and grows it in proportion to the
relative step-time gap until its step time lands inside the margin band
``[slow * (1 - 1/E), slow]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import TuningError, ValidationError
from .profiles import (
    UNBOUNDED_BATCH,
    ClusterSpec,
    NetworkDescriptor,
    NodeProfile,
    ThroughputCurve,
    max_batch_for_memory,
)


@dataclass(frozen=True)
class TuneConfig:
    # None means "the slow node's own benchmarked batch sizes".
    candidate_batches: tuple[int, ...] | None = None
    C: float = 4.0
    E: float = 5.0
    max_iterations: int = 100
    memory_cap_enforced: bool = True

    def __post_init__(self):
        if self.candidate_batches is not None:
            cands = tuple(int(b) for b in self.candidate_batches)
            if not cands:
                raise ValidationError("candidate_batches must be non-empty")
            if any(b < 1 for b in cands) or any(a >= b for a, b in zip(cands, cands[1:])):
                raise ValidationError("candidate_batches must be positive and strictly increasing")
            object.__setattr__(self, "candidate_batches", cands)
        if self.C < 1:
            raise ValidationError("C must be >= 1")
        if self.E <= 1:
            raise ValidationError("E must be > 1")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")

    def to_json(self) -> dict:
        return {
            "candidate_batches": list(self.candidate_batches) if self.candidate_batches else None,
            "C": self.C,
            "E": self.E,
            "max_iterations": self.max_iterations,
            "memory_cap_enforced": self.memory_cap_enforced,
        }


@dataclass(frozen=True)
class FastNodeTune:
    batch: int
    step_time: float
    converged: bool
    capped: bool
    trajectory: tuple[int, ...]
    # Size of the last batch increment applied (1 if no update happened).
    last_increment: int = 1

    @property
    def iterations(self) -> int:
        return len(self.trajectory) - 1


@dataclass(frozen=True)
class NodeTune:
    batch: int
    step_time: float
    images_per_second: float
    converged: bool = True
    capped: bool = False
    iterations: int = 0
    last_increment: int = 1


@dataclass(frozen=True)
class TuneResult:
    per_node: dict[str, NodeTune]
    slow_node_id: str
    margin_achieved: float
    config: TuneConfig = field(default_factory=TuneConfig)

    def batches(self) -> dict[str, int]:
        return {k: v.batch for k, v in self.per_node.items()}

    def to_json(self) -> dict:
        return {
            "slow_node": self.slow_node_id,
            "margin_achieved": self.margin_achieved,
            "per_node": {
                node_id: {
                    "batch": t.batch,
                    "step_time_sec": t.step_time,
                    "img_per_sec": t.images_per_second,
                    "converged": t.converged,
                    "capped": t.capped,
                    "iterations": t.iterations,
                }
                for node_id, t in sorted(self.per_node.items())
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TuneResult":
        try:
            per_node = {
                node_id: NodeTune(
                    batch=int(v["batch"]),
                    step_time=float(v["step_time_sec"]),
                    images_per_second=float(v["img_per_sec"]),
                    converged=bool(v.get("converged", True)),
                    capped=bool(v.get("capped", False)),
                    iterations=int(v.get("iterations", 0)),
                )
                for node_id, v in obj["per_node"].items()
            }
            result = cls(per_node, str(obj["slow_node"]), float(obj["margin_achieved"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed tune result: {exc}") from None
        if any(t.batch < 1 for t in per_node.values()):
            raise ValidationError("tune result has a batch size < 1")
        if result.slow_node_id not in per_node:
            raise ValidationError("slow_node is not among per_node entries")
        return result


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def select_slow_node_batch(
    curve: ThroughputCurve, config: TuneConfig, mem_cap: int = UNBOUNDED_BATCH
) -> tuple[int, float, float]:
    """Best-throughput candidate batch, ties broken toward the smaller batch.

    Returns ``(batch, images_per_second, step_time)``.
    """
    cands = config.candidate_batches or curve.batches
    allowed = [b for b in cands if b <= mem_cap]
    if not allowed:
        raise TuningError(f"no candidate batch size fits under the memory cap {mem_cap}")
    best = allowed[0]
    best_ips = curve.throughput(best)
    for b in allowed[1:]:
        ips = curve.throughput(b)
        if ips > best_ips:
            best, best_ips = b, ips
    return best, best_ips, best / best_ips


def tune_fast_node(
    fast_curve: ThroughputCurve,
    slow_step_time: float,
    config: TuneConfig,
    initial_batch: int,
    mem_cap: int = UNBOUNDED_BATCH,
) -> FastNodeTune:
    """Grow a fast node's batch until its step time is within 1/E below the slow node's."""
    if slow_step_time <= 0:
        raise ValueError("slow_step_time must be positive")
    if initial_batch < 1:
        raise ValueError("initial_batch must be >= 1")
    floor_time = slow_step_time * (1.0 - 1.0 / config.E)

    b = min(initial_batch, mem_cap)
    t = fast_curve.step_time(b)
    trajectory = [b]
    last_inc = 1
    for _ in range(config.max_iterations):
        if t >= floor_time:
            return FastNodeTune(b, t, True, False, tuple(trajectory), last_inc)
        if b >= mem_cap:
            return FastNodeTune(b, t, False, True, tuple(trajectory), last_inc)
        gap = (slow_step_time - t) / slow_step_time
        last_inc = max(1, _round_half_up(b * gap / config.C))
        b = min(b + last_inc, mem_cap)
        t = fast_curve.step_time(b)
        trajectory.append(b)
    converged = t >= floor_time
    return FastNodeTune(b, t, converged, not converged and b >= mem_cap, tuple(trajectory), last_inc)


def _mem_cap(node: NodeProfile, net: NetworkDescriptor, config: TuneConfig) -> int:
    if not config.memory_cap_enforced:
        return UNBOUNDED_BATCH
    try:
        return max_batch_for_memory(node, net)
    except ValidationError as exc:
        exc.location = node.node_id
        raise


def find_slow_node(cluster: ClusterSpec, net: NetworkDescriptor) -> str:
    """Node with the longest per-image time at its throughput plateau.

    Ties go to the lexicographically smallest node id so that node order in
    the cluster description never matters.
    """
    return min(
        cluster.nodes,
        key=lambda n: (n.curve(net.name).saturation_throughput, n.node_id),
    ).node_id


def tune_cluster(
    cluster: ClusterSpec, net: NetworkDescriptor, config: TuneConfig | None = None
) -> TuneResult:
    config = config or TuneConfig()
    nodes = sorted(cluster.nodes, key=lambda n: n.node_id)
    slow_id = find_slow_node(cluster, net)
    slow = cluster.node(slow_id)

    try:
        b_slow, ips_slow, t_slow = select_slow_node_batch(
            slow.curve(net.name), config, _mem_cap(slow, net, config)
        )
    except ValidationError as exc:
        raise type(exc)(f"node {slow_id}: {exc.message}", slow_id) from None

    per_node = {slow_id: NodeTune(b_slow, t_slow, ips_slow)}
    # Identical profiles produce identical results; reuse them.
    memo: dict[tuple, FastNodeTune] = {}
    for node in nodes:
        if node.node_id == slow_id:
            continue
        curve = node.curve(net.name)
        try:
            cap = _mem_cap(node, net, config)
            key = (curve, cap)
            if key not in memo:
                memo[key] = tune_fast_node(curve, t_slow, config, b_slow, cap)
        except ValidationError as exc:
            raise type(exc)(f"node {node.node_id}: {exc.message}", node.node_id) from None
        r = memo[key]
        per_node[node.node_id] = NodeTune(
            batch=r.batch,
            step_time=r.step_time,
            images_per_second=r.batch / r.step_time,
            converged=r.converged,
            capped=r.capped,
            iterations=r.iterations,
            last_increment=r.last_increment,
        )

    margin = max(abs(t.step_time - t_slow) / t_slow for t in per_node.values())
    ordered = {k: per_node[k] for k in sorted(per_node)}
    return TuneResult(ordered, slow_id, margin, config)
