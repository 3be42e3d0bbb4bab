"""Dataset assignment so that every node runs the same number of steps per epoch.

Samples are identified by integer IDs: public samples share one global ID
space, private samples live in an ID space scoped to their owning node.
Private samples never leave their owner.  A node consumes its own private
data first, then public data; when the public pool runs dry it repeats its
own private samples cyclically.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping

from .errors import InsufficientDataError, UnknownNodeError, ValidationError
from .tuner import TuneResult


@dataclass(frozen=True)
class DatasetSpec:
    public_total: int
    private_per_node: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.public_total < 0 or any(v < 0 for v in self.private_per_node.values()):
            raise ValidationError("sample counts must be non-negative")

    def private(self, node_id: str) -> int:
        return self.private_per_node.get(node_id, 0)

    def to_json(self) -> dict:
        return {"public_total": self.public_total, "private_per_node": dict(sorted(self.private_per_node.items()))}

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetSpec":
        try:
            return cls(
                int(obj["public_total"]),
                {str(k): int(v) for k, v in obj.get("private_per_node", {}).items()},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed dataset spec: {exc}") from None


@dataclass(frozen=True)
class NodeAssignment:
    batch_size: int
    private_assigned: int
    public_assigned: int
    duplicated_private: int
    steps_per_epoch: int
    # Owner of the private ID range; always the node itself in generated plans.
    private_owner: str
    public_start: int = 0

    @property
    def total(self) -> int:
        return self.private_assigned + self.public_assigned + self.duplicated_private

    @property
    def public_range(self) -> tuple[int, int]:
        return self.public_start, self.public_start + self.public_assigned

    @property
    def private_range(self) -> tuple[int, int]:
        return 0, self.private_assigned


@dataclass(frozen=True)
class PartitionPlan:
    per_node: dict[str, NodeAssignment]
    epoch_steps: int

    def to_json(self) -> dict:
        return {
            "epoch_steps": self.epoch_steps,
            "per_node": {
                node_id: {
                    "batch": a.batch_size,
                    "steps": a.steps_per_epoch,
                    "private_owner": a.private_owner,
                    "private": list(a.private_range),
                    "public": list(a.public_range),
                    "duplicated": a.duplicated_private,
                }
                for node_id, a in sorted(self.per_node.items())
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PartitionPlan":
        try:
            steps = int(obj["epoch_steps"])
            per_node = {}
            for node_id, v in obj["per_node"].items():
                plo, phi = v["private"]
                qlo, qhi = v["public"]
                if plo != 0 or phi < plo or qhi < qlo:
                    raise ValueError(f"bad ID ranges for {node_id}")
                per_node[node_id] = NodeAssignment(
                    batch_size=int(v["batch"]),
                    private_assigned=int(phi),
                    public_assigned=int(qhi - qlo),
                    duplicated_private=int(v["duplicated"]),
                    steps_per_epoch=int(v.get("steps", steps)),
                    private_owner=str(v.get("private_owner", node_id)),
                    public_start=int(qlo),
                )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed partition plan: {exc}") from None
        return cls(per_node, steps)

    def manifest_rows(self):
        """Yield ``(node_id, source, sample_id)`` for every sample slot of the epoch."""
        for node_id, a in sorted(self.per_node.items()):
            owner = a.private_owner
            for i in range(a.private_assigned):
                yield node_id, "private", f"{owner}:{i}"
            lo, hi = a.public_range
            for i in range(lo, hi):
                yield node_id, "public", str(i)
            for k in range(a.duplicated_private):
                yield node_id, "dup", f"{owner}:{k % a.private_assigned}"

    def manifest_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["node_id", "source", "sample_id"])
        writer.writerows(self.manifest_rows())
        return buf.getvalue()


def host_dataset_size(dataset_card: int, batchsize_card: int, batchsize_host: int) -> int:
    """Host samples needed to match a card's step count (partial batches dropped)."""
    if dataset_card < 1 or batchsize_card < 1 or batchsize_host < 1:
        raise ValueError("all inputs must be >= 1")
    return (dataset_card // batchsize_card) * batchsize_host


def _distinct(steps: int, batches: Mapping[str, int], data: DatasetSpec) -> int:
    """Distinct samples an epoch of ``steps`` can consume."""
    priv = sum(min(data.private(n), b * steps) for n, b in batches.items())
    need = sum(b * steps for b in batches.values()) - priv
    return priv + min(data.public_total, need)


def choose_epoch_steps(batches: Mapping[str, int], data: DatasetSpec) -> int:
    """Smallest step count that reaches the maximum number of distinct samples.

    Nodes without private data can only be fed public samples, which bounds
    the step count from above.  Among feasible counts the distinct-sample
    total is non-decreasing, so the first one that hits the maximum also
    has the least duplication.
    """
    public_only = sum(b for n, b in batches.items() if data.private(n) == 0)
    total_b = sum(batches.values())
    available = data.public_total + sum(data.private(n) for n in batches)
    upper = max(
        max(-(-data.private(n) // b) for n, b in batches.items()),
        -(-available // total_b),
        1,
    )
    if public_only:
        upper = min(upper, data.public_total // public_only)
    if upper < 1:
        raise InsufficientDataError(
            f"not enough public samples for one step: need {public_only}, have {data.public_total}"
        )
    best = _distinct(upper, batches, data)
    lo, hi = 1, upper
    while lo < hi:
        mid = (lo + hi) // 2
        if _distinct(mid, batches, data) >= best:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _largest_remainder(total: int, weights: Mapping[str, int]) -> dict[str, int]:
    """Split ``total`` proportionally to ``weights`` in integers, capped at each weight."""
    wsum = sum(weights.values())
    if wsum == 0 or total == 0:
        return {k: 0 for k in weights}
    if total >= wsum:
        return dict(weights)
    shares = {k: total * w // wsum for k, w in weights.items()}
    left = total - sum(shares.values())
    order = sorted(weights, key=lambda k: (-(total * weights[k] % wsum), k))
    for k in order[:left]:
        shares[k] += 1
    return shares


def balance_epoch(tune: TuneResult | Mapping[str, int], data: DatasetSpec) -> PartitionPlan:
    batches = tune.batches() if isinstance(tune, TuneResult) else dict(tune)
    if not batches:
        raise ValidationError("no nodes to partition for")
    unknown = sorted(set(data.private_per_node) - set(batches))
    if unknown:
        raise UnknownNodeError(f"dataset names nodes absent from the tuning: {unknown}", unknown[0])

    steps = choose_epoch_steps(batches, data)
    need = {n: b * steps for n, b in batches.items()}
    priv = {n: min(data.private(n), need[n]) for n in batches}
    deficit = {n: need[n] - priv[n] for n in batches}

    # Nodes with nothing to duplicate must be served in full from the public pool.
    mandatory = {n: d for n, d in deficit.items() if data.private(n) == 0}
    flexible = {n: d for n, d in deficit.items() if data.private(n) > 0}
    pool = data.public_total - sum(mandatory.values())
    public = dict(mandatory)
    public.update(_largest_remainder(pool, flexible))

    per_node = {}
    cursor = 0
    for n in sorted(batches):
        dup = deficit[n] - public[n]
        per_node[n] = NodeAssignment(
            batch_size=batches[n],
            private_assigned=priv[n],
            public_assigned=public[n],
            duplicated_private=dup,
            steps_per_epoch=steps,
            private_owner=n,
            public_start=cursor,
        )
        cursor += public[n]
    return PartitionPlan(per_node, steps)


def validate_plan(
    plan: PartitionPlan, tune: TuneResult | Mapping[str, int], data: DatasetSpec
) -> list[str]:
    """Every broken plan invariant, as ``"<node>: <constraint>"`` strings."""
    batches = tune.batches() if isinstance(tune, TuneResult) else dict(tune)
    out = []
    for n in sorted(set(batches) - set(plan.per_node)):
        out.append(f"{n}: missing from plan")
    public_used = 0
    ranges = []
    for n, a in sorted(plan.per_node.items()):
        if n not in batches:
            out.append(f"{n}: not in tuning result")
            continue
        if a.batch_size != batches[n]:
            out.append(f"{n}: batch {a.batch_size} differs from tuned batch {batches[n]}")
        if a.steps_per_epoch != plan.epoch_steps:
            out.append(f"{n}: steps {a.steps_per_epoch} differ from epoch_steps {plan.epoch_steps}")
        if a.total != batches[n] * plan.epoch_steps:
            out.append(
                f"{n}: divisibility: assigned {a.total} != batch {batches[n]} x steps {plan.epoch_steps}"
            )
        if a.private_owner != n and (a.private_assigned or a.duplicated_private):
            out.append(f"{n}: privacy: holds private data of {a.private_owner}")
        owned = data.private(a.private_owner)
        if a.private_assigned > owned:
            out.append(f"{n}: private_assigned {a.private_assigned} exceeds owned {owned}")
        if a.duplicated_private and a.private_assigned == 0:
            out.append(f"{n}: duplicates private data it does not have")
        if min(a.private_assigned, a.public_assigned, a.duplicated_private) < 0:
            out.append(f"{n}: negative count")
        public_used += a.public_assigned
        if a.public_assigned:
            ranges.append((a.public_range, n))
    if public_used > data.public_total:
        out.append(f"*: public_assigned {public_used} exceeds public_total {data.public_total}")
    ranges.sort()
    for (r1, n1), (r2, n2) in zip(ranges, ranges[1:]):
        if r2[0] < r1[1]:
            out.append(f"{n2}: public range overlaps {n1}")
    if ranges and (ranges[0][0][0] < 0 or ranges[-1][0][1] > data.public_total):
        out.append("*: public range outside the public pool")
    any_dup = any(a.duplicated_private for a in plan.per_node.values())
    if any_dup and public_used < data.public_total:
        out.append("*: private data duplicated while public samples remain unused")
    return out
