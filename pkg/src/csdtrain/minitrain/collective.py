"""Ring reduce-scatter + allgather over in-process workers.

Segments are contiguous floor-balanced slices (the first ``len % N``
segments carry one extra element).  In reduce-scatter round ``r`` worker
``i`` passes segment ``(i - r) mod N`` to worker ``i + 1``, which adds it to
its own copy; in allgather round ``r`` worker ``i`` forwards the finished
segment ``(i + 1 - r) mod N``.  The fixed schedule fixes the summation order,
so every run is bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..errors import DimensionError, ValidationError
from .model import GradientTensor


@dataclass(frozen=True)
class Transfer:
    phase: str  # "reduce_scatter" or "allgather"
    sender: int
    receiver: int
    lo: int
    hi: int

    @property
    def size(self) -> int:
        return self.hi - self.lo


def segment_bounds(n_workers: int, length: int) -> list[tuple[int, int]]:
    base, extra = divmod(length, n_workers)
    bounds, lo = [], 0
    for k in range(n_workers):
        hi = lo + base + (k < extra)
        bounds.append((lo, hi))
        lo = hi
    return bounds


def ring_schedule(n_workers: int, tensor_len: int) -> list[list[Transfer]]:
    """``2(N-1)`` rounds; in each one every worker sends one segment to its successor."""
    if n_workers < 2:
        raise ValidationError("a ring needs at least 2 workers")
    seg = segment_bounds(n_workers, tensor_len)
    rounds = []
    for r in range(n_workers - 1):
        rounds.append([
            Transfer("reduce_scatter", i, (i + 1) % n_workers, *seg[(i - r) % n_workers])
            for i in range(n_workers)
        ])
    for r in range(n_workers - 1):
        rounds.append([
            Transfer("allgather", i, (i + 1) % n_workers, *seg[(i + 1 - r) % n_workers])
            for i in range(n_workers)
        ])
    return rounds


def per_worker_traffic(n_workers: int, tensor_len: int) -> list[int]:
    """Elements each worker sends over the whole schedule."""
    sent = [0] * n_workers
    for rnd in ring_schedule(n_workers, tensor_len):
        for t in rnd:
            sent[t.sender] += t.size
    return sent


def mean_traffic_fraction(n_workers: int, tensor_len: int) -> Fraction:
    """Mean elements sent per worker, as an exact multiple of the tensor length."""
    if tensor_len == 0:
        return Fraction(0)
    return Fraction(sum(per_worker_traffic(n_workers, tensor_len)), n_workers * tensor_len)


def ring_allreduce_sum(buffers: list[np.ndarray]) -> list[np.ndarray]:
    """Sum of ``buffers`` as seen by every worker after the ring schedule."""
    n = len(buffers)
    work = [np.array(b, dtype=np.float64, copy=True) for b in buffers]
    if n == 1:
        return work
    for rnd in ring_schedule(n, work[0].size):
        # Snapshot outgoing data first: all sends in a round happen concurrently.
        outgoing = [work[t.sender][t.lo : t.hi].copy() for t in rnd]
        for t, data in zip(rnd, outgoing):
            if t.phase == "reduce_scatter":
                work[t.receiver][t.lo : t.hi] += data
            else:
                work[t.receiver][t.lo : t.hi] = data
    return work


def weighted_allreduce(grads, weighted: bool = True) -> GradientTensor:
    """``sum(w_i * g_i) / sum(w_i)`` via the ring schedule.

    ``grads`` is a list of ``(GradientTensor, weight)``.  With
    ``weighted=False`` the weights are ignored and a plain mean is taken.
    """
    if not grads:
        raise ValidationError("nothing to reduce")
    tensors = [g for g, _ in grads]
    weights = [1.0 if not weighted else float(w) for _, w in grads]
    if any(w <= 0 for w in weights):
        raise ValidationError("weights must be positive")
    length = len(tensors[0])
    if any(len(t) != length for t in tensors):
        raise DimensionError("gradient tensors differ in length")
    scaled = [w * t.values for t, w in zip(tensors, weights)]
    total_w = sum(weights)
    reduced = ring_allreduce_sum(scaled)
    return GradientTensor(reduced[0] / total_w, tensors[0].layout)
