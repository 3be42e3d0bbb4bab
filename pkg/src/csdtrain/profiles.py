"""Per-node benchmark data, fitted throughput curves, and hardware descriptors.

Throughput curves are the kernel everything else consumes: the tuner asks them
for step times, the simulator for per-round compute, the CLI for plots.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import isotonic_regression

from .errors import (
    BenchmarkFormatError,
    CurveFitError,
    DuplicateRecordError,
    ModelDoesNotFitError,
    NonPositiveValueError,
    ValidationError,
)

GIB = 1 << 30

BENCH_HEADER = ("node_id", "network", "batch_size", "images_per_sec")

# Fitted samples within this fraction of the top value count as saturated.
SATURATION_TOLERANCE = 0.02

# Model state = weights + gradients + optimizer slot.
MODEL_STATE_COPIES = 3

# Returned by max_batch_for_memory when no activation footprint is configured.
UNBOUNDED_BATCH = 2**31 - 1


@dataclass(frozen=True)
class BenchmarkRecord:
    node_id: str
    network: str
    batch_size: int
    images_per_second: float


@dataclass(frozen=True)
class NetworkDescriptor:
    name: str
    param_count: int
    flop_count: float
    mac_count: float
    bytes_per_param: int = 4
    activation_bytes_per_sample: int = 0

    def __post_init__(self):
        if self.param_count <= 0 or self.flop_count <= 0 or self.mac_count <= 0:
            raise ValidationError(
                f"network {self.name!r}: param/flop/mac counts must be positive"
            )
        if self.bytes_per_param not in (2, 4, 8):
            raise ValidationError(
                f"network {self.name!r}: bytes_per_param must be 2, 4 or 8"
            )
        if self.activation_bytes_per_sample < 0:
            raise ValidationError(
                f"network {self.name!r}: activation_bytes_per_sample must be >= 0"
            )

    @property
    def payload_bytes(self) -> int:
        """Size of one full gradient exchange."""
        return self.param_count * self.bytes_per_param

    @property
    def model_bytes(self) -> int:
        return MODEL_STATE_COPIES * self.payload_bytes

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "param_count": self.param_count,
            "flop_count": self.flop_count,
            "mac_count": self.mac_count,
            "bytes_per_param": self.bytes_per_param,
            "activation_bytes_per_sample": self.activation_bytes_per_sample,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NetworkDescriptor":
        try:
            return cls(
                name=str(obj["name"]),
                param_count=int(obj["param_count"]),
                flop_count=float(obj["flop_count"]),
                mac_count=float(obj["mac_count"]),
                bytes_per_param=int(obj.get("bytes_per_param", 4)),
                activation_bytes_per_sample=int(obj.get("activation_bytes_per_sample", 0)),
            )
        except KeyError as exc:
            raise ValidationError(f"network descriptor missing key {exc.args[0]!r}") from None


@dataclass(frozen=True)
class ThroughputCurve:
    """Saturating monotone model of images/second versus batch size.

    ``batches`` are the sampled batch sizes, ``fitted`` the isotonic-regressed
    throughputs with every sample at or beyond ``saturation_batch`` snapped to
    the plateau value.  Evaluation interpolates linearly between samples,
    holds the plateau above the largest sample and scales proportionally
    (through the origin) below the smallest one.
    """

    batches: tuple[int, ...]
    raw: tuple[float, ...]
    fitted: tuple[float, ...]
    saturation_throughput: float
    saturation_batch: int

    @property
    def samples(self) -> list[tuple[int, float]]:
        return list(zip(self.batches, self.raw))

    def throughput(self, batch: int) -> float:
        _check_batch(batch)
        lo = self.batches[0]
        if batch < lo:
            return self.fitted[0] * batch / lo
        if batch >= self.saturation_batch:
            return self.saturation_throughput
        return float(np.interp(batch, self.batches, self.fitted))

    def step_time(self, batch: int) -> float:
        return batch / self.throughput(batch)

    def to_json(self) -> list[list[float]]:
        return [[b, t] for b, t in self.samples]


@dataclass(frozen=True)
class NodeProfile:
    node_id: str
    node_class: str
    curves: dict[str, ThroughputCurve]
    dram_bytes: int
    active_power_watts: float = 0.0
    idle_power_watts: float = 0.0

    def __post_init__(self):
        if self.node_class not in ("host", "csd"):
            raise ValidationError(
                f"node {self.node_id!r}: class must be 'host' or 'csd'", self.node_id
            )
        if self.dram_bytes <= 0:
            raise ValidationError(f"node {self.node_id!r}: dram_bytes must be > 0", self.node_id)
        if not self.active_power_watts >= self.idle_power_watts >= 0:
            raise ValidationError(
                f"node {self.node_id!r}: need active_power >= idle_power >= 0", self.node_id
            )

    def curve(self, network: str) -> ThroughputCurve:
        try:
            return self.curves[network]
        except KeyError:
            raise ValidationError(
                f"node {self.node_id!r} has no throughput curve for {network!r}", self.node_id
            ) from None

    def to_json(self) -> dict:
        return {
            "node_id": self.node_id,
            "class": self.node_class,
            "dram_bytes": self.dram_bytes,
            "active_power_watts": self.active_power_watts,
            "idle_power_watts": self.idle_power_watts,
            "curves": {name: c.to_json() for name, c in sorted(self.curves.items())},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NodeProfile":
        node_id = str(obj.get("node_id", "?"))
        try:
            curves = {
                name: fit_curve([(int(b), float(t)) for b, t in samples])
                for name, samples in obj.get("curves", {}).items()
            }
            return cls(
                node_id=node_id,
                node_class=str(obj["class"]),
                curves=curves,
                dram_bytes=int(obj["dram_bytes"]),
                active_power_watts=float(obj.get("active_power_watts", 0.0)),
                idle_power_watts=float(obj.get("idle_power_watts", 0.0)),
            )
        except KeyError as exc:
            raise ValidationError(f"node missing key {exc.args[0]!r}", node_id) from None


@dataclass(frozen=True)
class ClusterSpec:
    host: NodeProfile | None
    csds: tuple[NodeProfile, ...]
    link_bandwidth_bytes_per_sec: float
    link_latency_sec: float = 0.0
    baseline_storage_idle_watts: float = 0.0

    def __post_init__(self):
        if self.host is None and not self.csds:
            raise ValidationError("cluster needs at least one node")
        if self.link_bandwidth_bytes_per_sec <= 0:
            raise ValidationError("link bandwidth must be > 0")
        if self.link_latency_sec < 0:
            raise ValidationError("link latency must be >= 0")
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate node_id in cluster")

    @property
    def nodes(self) -> list[NodeProfile]:
        return ([self.host] if self.host is not None else []) + list(self.csds)

    def node(self, node_id: str) -> NodeProfile:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise ValidationError(f"unknown node {node_id!r}", node_id)

    def with_csds(self, n_csds: int) -> "ClusterSpec":
        """The same cluster restricted to its first ``n_csds`` CSDs."""
        if n_csds > len(self.csds):
            raise ValidationError(
                f"cluster has {len(self.csds)} CSDs, {n_csds} requested"
            )
        return ClusterSpec(
            host=self.host,
            csds=self.csds[:n_csds],
            link_bandwidth_bytes_per_sec=self.link_bandwidth_bytes_per_sec,
            link_latency_sec=self.link_latency_sec,
            baseline_storage_idle_watts=self.baseline_storage_idle_watts,
        )

    def to_json(self) -> dict:
        return {
            "host": self.host.to_json() if self.host is not None else None,
            "csds": [c.to_json() for c in self.csds],
            "link": {
                "bandwidth_bytes_per_sec": self.link_bandwidth_bytes_per_sec,
                "latency_sec": self.link_latency_sec,
            },
            "baseline_storage_idle_watts": self.baseline_storage_idle_watts,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ClusterSpec":
        try:
            link = obj["link"]
            host = obj.get("host")
            return cls(
                host=NodeProfile.from_json(host) if host else None,
                csds=tuple(NodeProfile.from_json(c) for c in obj.get("csds", [])),
                link_bandwidth_bytes_per_sec=float(link["bandwidth_bytes_per_sec"]),
                link_latency_sec=float(link.get("latency_sec", 0.0)),
                baseline_storage_idle_watts=float(obj.get("baseline_storage_idle_watts", 0.0)),
            )
        except KeyError as exc:
            raise ValidationError(f"cluster spec missing key {exc.args[0]!r}") from None


def _check_batch(batch) -> None:
    if isinstance(batch, bool) or int(batch) != batch or batch < 1:
        raise ValueError(f"batch size must be a positive integer, got {batch!r}")


def load_benchmark(path, format: str | None = None) -> list[BenchmarkRecord]:
    """Read benchmark records from CSV or JSON, preserving file order."""
    path = Path(path)
    if format is None:
        format = "json" if path.suffix.lower() == ".json" else "csv"
    if format == "csv":
        rows = _read_bench_csv(path)
    elif format == "json":
        rows = _read_bench_json(path)
    else:
        raise ValueError(f"unknown benchmark format {format!r}")

    records = []
    seen = set()
    for where, row in rows:
        try:
            node_id = str(row["node_id"]).strip()
            network = str(row["network"]).strip()
            batch = float(row["batch_size"])
            ips = float(row["images_per_sec"])
        except (KeyError, TypeError, ValueError) as exc:
            raise BenchmarkFormatError(f"{where}: cannot parse record ({exc})", where) from None
        if batch != int(batch):
            raise BenchmarkFormatError(f"{where}: batch_size must be an integer", where)
        if batch <= 0 or not ips > 0 or not math.isfinite(ips):
            raise NonPositiveValueError(
                f"{where}: batch_size and images_per_sec must be positive", where
            )
        key = (node_id, network, int(batch))
        if key in seen:
            raise DuplicateRecordError(f"{where}: duplicate record {key}", where)
        seen.add(key)
        records.append(BenchmarkRecord(node_id, network, int(batch), ips))
    return records


def _read_bench_csv(path: Path):
    rows = []
    header = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            fields = next(csv.reader([stripped]))
            if header is None:
                if tuple(f.strip() for f in fields) != BENCH_HEADER:
                    raise BenchmarkFormatError(
                        f"line {lineno}: expected header {','.join(BENCH_HEADER)}",
                        f"line {lineno}",
                    )
                header = BENCH_HEADER
                continue
            if len(fields) != len(header):
                raise BenchmarkFormatError(
                    f"line {lineno}: expected {len(header)} fields, got {len(fields)}",
                    f"line {lineno}",
                )
            rows.append((f"line {lineno}", dict(zip(header, fields))))
    return rows


def _read_bench_json(path: Path):
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        return []
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BenchmarkFormatError(f"line {exc.lineno}: {exc.msg}", f"line {exc.lineno}") from None
    if isinstance(obj, dict):
        obj = obj.get("records", [])
    if not isinstance(obj, list):
        raise BenchmarkFormatError("benchmark JSON must be a list of records")
    return [(f"record {i}", row) for i, row in enumerate(obj)]


def dump_benchmark(records: Iterable[BenchmarkRecord], path, format: str = "csv") -> None:
    path = Path(path)
    records = list(records)
    if format == "json":
        payload = [
            {
                "node_id": r.node_id,
                "network": r.network,
                "batch_size": r.batch_size,
                "images_per_sec": r.images_per_second,
            }
            for r in records
        ]
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BENCH_HEADER)
        for r in records:
            writer.writerow([r.node_id, r.network, r.batch_size, repr(r.images_per_second)])


def group_records(records: Iterable[BenchmarkRecord]) -> dict[str, dict[str, list[tuple[int, float]]]]:
    """node_id -> network -> [(batch, img/s)] in file order."""
    out: dict[str, dict[str, list[tuple[int, float]]]] = {}
    for r in records:
        out.setdefault(r.node_id, {}).setdefault(r.network, []).append(
            (r.batch_size, r.images_per_second)
        )
    return out


def fit_curve(records: Sequence[tuple[int, float]]) -> ThroughputCurve:
    if len(records) < 2:
        raise CurveFitError("need at least 2 benchmark samples to fit a curve")
    pts = sorted((int(b), float(t)) for b, t in records)
    batches = [b for b, _ in pts]
    if len(set(batches)) != len(batches):
        if len(set(batches)) == 1:
            raise CurveFitError("all samples share one batch size")
        raise CurveFitError("duplicate batch sizes in samples")
    if batches[0] < 1:
        raise CurveFitError("batch sizes must be positive")
    raw = np.array([t for _, t in pts], dtype=float)
    if np.any(raw < 0) or not np.all(np.isfinite(raw)):
        raise CurveFitError("throughputs must be finite and non-negative")

    fitted = isotonic_regression(raw, increasing=True).x
    top = float(fitted[-1])
    if top <= 0:
        raise CurveFitError("curve has zero throughput everywhere")
    sat_idx = int(np.argmax(fitted >= top * (1.0 - SATURATION_TOLERANCE)))
    fitted[sat_idx:] = top
    if fitted[0] <= 0:
        raise CurveFitError("smallest sampled batch has zero throughput")
    return ThroughputCurve(
        batches=tuple(batches),
        raw=tuple(float(t) for t in raw),
        fitted=tuple(float(t) for t in fitted),
        saturation_throughput=top,
        saturation_batch=batches[sat_idx],
    )


def throughput_at(curve: ThroughputCurve, batch: int) -> float:
    return curve.throughput(batch)


def step_time(curve: ThroughputCurve, batch: int) -> float:
    """Seconds for one training step of ``batch`` samples."""
    return curve.step_time(batch)


def max_batch_for_memory(node: NodeProfile, net: NetworkDescriptor) -> int:
    """Largest batch whose activations fit in DRAM next to the model state."""
    free = node.dram_bytes - net.model_bytes
    if free < 0:
        raise ModelDoesNotFitError(
            f"{net.name} needs {net.model_bytes} B of model state, "
            f"node {node.node_id} has {node.dram_bytes} B",
            node.node_id,
        )
    if net.activation_bytes_per_sample == 0:
        return UNBOUNDED_BATCH
    batch = free // net.activation_bytes_per_sample
    if batch < 1:
        raise ModelDoesNotFitError(
            f"{net.name} fits on node {node.node_id} but not even one sample does",
            node.node_id,
        )
    return int(batch)


def build_cluster(
    records: Iterable[BenchmarkRecord],
    template: dict,
) -> ClusterSpec:
    """Attach benchmark curves to a cluster template (the cluster JSON without curves)."""
    grouped = group_records(records)
    obj = json.loads(json.dumps(template))
    nodes = ([obj["host"]] if obj.get("host") else []) + list(obj.get("csds", []))
    for node in nodes:
        extra = grouped.get(node["node_id"], {})
        curves = node.setdefault("curves", {})
        for net, samples in extra.items():
            curves[net] = [[b, t] for b, t in samples]
    return ClusterSpec.from_json(obj)


def load_network(path) -> NetworkDescriptor:
    return NetworkDescriptor.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def load_cluster(path) -> ClusterSpec:
    return ClusterSpec.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
