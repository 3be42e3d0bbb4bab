"""Discrete-event model of synchronous data-parallel training on a host + CSD cluster.

Each round every node computes one batch, waits at the barrier for the
slowest node, then all nodes take part in a ring-allreduce of the gradient.
There is no compute/communication overlap.
"""

from __future__ import annotations

import heapq
from dataclasses import asdict, dataclass, field, replace

from .errors import InconsistentInputError, ValidationError
from .partitioner import DatasetSpec, PartitionPlan, balance_epoch
from .profiles import ClusterSpec, NetworkDescriptor
from .tuner import TuneConfig, TuneResult, tune_cluster

REPORT_CSV_HEADER = ("network", "n_csds", "img_per_sec", "speedup", "j_per_img", "saving_pct", "flops_per_watt")


def ring_factor(n_nodes: int) -> float:
    """Fraction of the payload each node sends (and receives) in a ring-allreduce."""
    return 2.0 * (n_nodes - 1) / n_nodes


@dataclass(frozen=True)
class SyncModel:
    alpha_sec: float = 0.0
    effective_bandwidth_bytes_per_sec: float = 1.0e9
    per_param_overhead: float = 1.0

    def __post_init__(self):
        if self.alpha_sec < 0:
            raise ValidationError("sync.alpha_sec must be >= 0")
        if self.effective_bandwidth_bytes_per_sec <= 0:
            raise ValidationError("sync.effective_bandwidth_bytes_per_sec must be > 0")
        if self.per_param_overhead < 1:
            raise ValidationError("sync.per_param_overhead must be >= 1")

    @classmethod
    def from_cluster(cls, cluster: ClusterSpec, **overrides) -> "SyncModel":
        base = cls(cluster.link_latency_sec, cluster.link_bandwidth_bytes_per_sec)
        return replace(base, **overrides)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EnergyModelParams:
    host_active_watts: float = 0.0
    csd_active_watts: float = 0.0
    csd_idle_watts: float = 0.0
    baseline_ssd_idle_watts: float = 0.0
    chassis_overhead_watts: float = 0.0
    # Drive bays: the baseline fills them with conventional SSDs.
    drive_slots: int = 24

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ValidationError(f"energy.{k} must be >= 0")

    @classmethod
    def from_cluster(cls, cluster: ClusterSpec, **overrides) -> "EnergyModelParams":
        slots = max(len(cluster.csds), 1)
        csd = cluster.csds[0] if cluster.csds else None
        base = cls(
            host_active_watts=cluster.host.active_power_watts if cluster.host else 0.0,
            csd_active_watts=csd.active_power_watts if csd else 0.0,
            csd_idle_watts=csd.idle_power_watts if csd else 0.0,
            baseline_ssd_idle_watts=cluster.baseline_storage_idle_watts / slots,
            drive_slots=slots,
        )
        return replace(base, **overrides)

    def total_watts(self, n_csds: int, has_host: bool = True) -> float:
        """Wall power of the CSD server with ``n_csds`` drives training.

        With no CSD active the machine is the conventional-SSD baseline.
        """
        host = self.host_active_watts if has_host else 0.0
        if n_csds == 0:
            return self.baseline_watts(has_host)
        idle = max(self.drive_slots - n_csds, 0) * self.csd_idle_watts
        return self.chassis_overhead_watts + host + n_csds * self.csd_active_watts + idle

    def baseline_watts(self, has_host: bool = True) -> float:
        host = self.host_active_watts if has_host else 0.0
        return self.chassis_overhead_watts + host + self.drive_slots * self.baseline_ssd_idle_watts

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EpochReport:
    network: str
    n_nodes: int
    n_csds: int
    batch_sizes: dict[str, int]
    epoch_steps: int
    round_time: float
    sync_time: float
    epoch_time: float
    images_per_second_aggregate: float
    per_node_effective_speed: dict[str, float]
    stall_seconds_per_step: dict[str, float]
    host_plateau: float
    speedup_vs_host: float
    total_watts: float = 0.0
    baseline_watts: float = 0.0
    energy_per_image_joules: float = 0.0
    baseline_energy_per_image_joules: float = 0.0
    energy_saving_vs_baseline: float = 0.0
    flops_per_watt: float = 0.0

    def to_json(self) -> dict:
        out = asdict(self)
        out["batch_sizes"] = dict(sorted(self.batch_sizes.items()))
        out["per_node_effective_speed"] = dict(sorted(self.per_node_effective_speed.items()))
        out["stall_seconds_per_step"] = dict(sorted(self.stall_seconds_per_step.items()))
        return out

    def csv_row(self) -> list:
        return [
            self.network,
            self.n_csds,
            repr(self.images_per_second_aggregate),
            repr(self.speedup_vs_host),
            repr(self.energy_per_image_joules),
            repr(100.0 * self.energy_saving_vs_baseline),
            repr(self.flops_per_watt),
        ]


def sync_time(model: SyncModel, param_count: int, bytes_per_param: int, n_nodes: int) -> float:
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    if n_nodes == 1:
        return 0.0
    payload = param_count * bytes_per_param * model.per_param_overhead
    return model.alpha_sec + ring_factor(n_nodes) * payload / model.effective_bandwidth_bytes_per_sec


def _run_round(compute: dict[str, float], sync: float) -> tuple[float, dict[str, float]]:
    """Event loop for one barrier-synchronised round starting at t=0.

    Returns the round length and each node's wait at the barrier.  Rounds
    are identical, so one round determines the whole epoch.
    """
    events = [(t, n) for n, t in sorted(compute.items())]
    heapq.heapify(events)
    finished = {}
    while events:
        t, n = heapq.heappop(events)
        finished[n] = t
    barrier = finished[n]
    stall = {n: barrier - t for n, t in finished.items()}
    return barrier + sync, stall


def simulate_epoch(
    cluster: ClusterSpec,
    net: NetworkDescriptor,
    tune: TuneResult,
    plan: PartitionPlan,
    sync: SyncModel,
    energy: EnergyModelParams | None = None,
) -> EpochReport:
    batches = tune.batches()
    if set(batches) != set(plan.per_node):
        raise InconsistentInputError("tune result and partition plan cover different nodes")
    for n, a in plan.per_node.items():
        if a.batch_size != batches[n]:
            raise InconsistentInputError(f"node {n}: plan batch {a.batch_size} != tuned {batches[n]}", n)
    nodes = {n: cluster.node(n) for n in batches}

    compute = {n: nodes[n].curve(net.name).step_time(b) for n, b in batches.items()}
    n_nodes = len(batches)
    t_sync = sync_time(sync, net.param_count, net.bytes_per_param, n_nodes)
    steps = plan.epoch_steps
    round_time, stall = _run_round(compute, t_sync)
    epoch_time = steps * round_time

    # Each node runs at its standalone speed for the busy fraction of a round.
    effective = {
        n: nodes[n].curve(net.name).throughput(b) * (compute[n] / round_time)
        for n, b in batches.items()
    }
    aggregate = sum(effective[n] for n in sorted(effective))
    host = cluster.host if cluster.host is not None else nodes[min(nodes)]
    host_plateau = host.curve(net.name).saturation_throughput
    n_csds = sum(1 for p in nodes.values() if p.node_class == "csd")

    report = EpochReport(
        network=net.name,
        n_nodes=n_nodes,
        n_csds=n_csds,
        batch_sizes=dict(batches),
        epoch_steps=steps,
        round_time=round_time,
        sync_time=t_sync,
        epoch_time=epoch_time,
        images_per_second_aggregate=aggregate,
        per_node_effective_speed=effective,
        stall_seconds_per_step=stall,
        host_plateau=host_plateau,
        speedup_vs_host=aggregate / host_plateau,
    )
    if energy is not None:
        report = attach_energy(report, net, energy, has_host=cluster.host is not None and cluster.host.node_id in batches)
    return report


def energy_per_image(report: EpochReport, energy: EnergyModelParams, n_csds: int, has_host: bool = True) -> tuple[float, float]:
    """``(joules per image, saving vs the conventional-SSD baseline)``."""
    if report.images_per_second_aggregate <= 0:
        raise ValidationError("zero throughput: energy per image undefined")
    joules = energy.total_watts(n_csds, has_host) / report.images_per_second_aggregate
    baseline = energy.baseline_watts(has_host) / report.host_plateau
    return joules, 1.0 - joules / baseline


def flops_per_watt(net: NetworkDescriptor, report: EpochReport) -> float:
    return net.flop_count * report.images_per_second_aggregate / report.total_watts


def attach_energy(report: EpochReport, net: NetworkDescriptor, energy: EnergyModelParams, has_host: bool = True) -> EpochReport:
    joules, saving = energy_per_image(report, energy, report.n_csds, has_host)
    report = replace(
        report,
        total_watts=energy.total_watts(report.n_csds, has_host),
        baseline_watts=energy.baseline_watts(has_host),
        energy_per_image_joules=joules,
        baseline_energy_per_image_joules=energy.baseline_watts(has_host) / report.host_plateau,
        energy_saving_vs_baseline=saving,
    )
    return replace(report, flops_per_watt=flops_per_watt(net, report))


def default_dataset(cluster: ClusterSpec, public_total: int = 72000, private_total: int = 12000) -> DatasetSpec:
    """Public pool plus an even split of the private pool over the cluster's CSDs."""
    csds = [c.node_id for c in cluster.csds]
    if not csds:
        return DatasetSpec(public_total)
    share, extra = divmod(private_total, len(csds))
    return DatasetSpec(public_total, {c: share + (i < extra) for i, c in enumerate(csds)})


@dataclass
class Pipeline:
    """Tune, partition and simulate one configuration; caches the sync-independent stages."""

    cluster: ClusterSpec
    tune_config: TuneConfig = field(default_factory=TuneConfig)
    dataset: DatasetSpec | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def prepare(self, net: NetworkDescriptor, n_csds: int):
        key = (net, n_csds)
        if key not in self._cache:
            sub = self.cluster.with_csds(n_csds)
            if self.dataset is None:
                data = default_dataset(self.cluster)
            else:
                data = self.dataset
            ids = {n.node_id for n in sub.nodes}
            data = DatasetSpec(data.public_total, {k: v for k, v in data.private_per_node.items() if k in ids})
            tune = tune_cluster(sub, net, self.tune_config)
            plan = balance_epoch(tune, data)
            self._cache[key] = (sub, tune, plan)
        return self._cache[key]

    def run(self, net: NetworkDescriptor, n_csds: int, sync: SyncModel, energy: EnergyModelParams | None = None) -> EpochReport:
        sub, tune, plan = self.prepare(net, n_csds)
        return simulate_epoch(sub, net, tune, plan, sync, energy)


def speedup_curve(
    cluster: ClusterSpec,
    net: NetworkDescriptor,
    node_counts,
    sync: SyncModel,
    energy: EnergyModelParams | None = None,
    tune_config: TuneConfig | None = None,
    dataset: DatasetSpec | None = None,
    pipeline: Pipeline | None = None,
) -> list[tuple[int, EpochReport]]:
    counts = list(node_counts)
    if counts != sorted(counts):
        raise ValidationError("node_counts must be sorted ascending")
    if counts and counts[-1] > len(cluster.csds):
        raise ValidationError(f"cluster has only {len(cluster.csds)} CSDs")
    pipe = pipeline or Pipeline(cluster, tune_config or TuneConfig(), dataset)
    return [(n, pipe.run(net, n, sync, energy)) for n in counts]
