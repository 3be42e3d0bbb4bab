import pytest

from csdtrain import fixtures
from csdtrain.errors import InconsistentInputError, ValidationError
from csdtrain.partitioner import DatasetSpec, balance_epoch
from csdtrain.profiles import ClusterSpec
from csdtrain.simengine import (
    EnergyModelParams,
    Pipeline,
    SyncModel,
    default_dataset,
    ring_factor,
    simulate_epoch,
    speedup_curve,
    sync_time,
)
from csdtrain.tuner import tune_cluster


def test_sync_time_formula():
    m = SyncModel(alpha_sec=0.01, effective_bandwidth_bytes_per_sec=1e6, per_param_overhead=2.0)
    assert sync_time(m, 1000, 4, 1) == 0.0
    assert sync_time(m, 1000, 4, 4) == pytest.approx(0.01 + 1.5 * 8000 / 1e6)
    assert ring_factor(2) == 1.0 and ring_factor(24) == pytest.approx(46 / 24)


@pytest.mark.parametrize("kw", [{"alpha_sec": -1}, {"effective_bandwidth_bytes_per_sec": 0}, {"per_param_overhead": 0.5}])
def test_sync_model_validation(kw):
    with pytest.raises(ValidationError):
        SyncModel(**kw)


def test_energy_model_totals():
    e = EnergyModelParams(200, 4, 1, 6, 10, drive_slots=24)
    assert e.total_watts(0) == e.baseline_watts() == 10 + 200 + 24 * 6
    assert e.total_watts(8) == 10 + 200 + 8 * 4 + 16 * 1
    assert e.total_watts(8, has_host=False) == 10 + 8 * 4 + 16
    with pytest.raises(ValidationError):
        EnergyModelParams(csd_active_watts=-1)


@pytest.mark.parametrize("net", fixtures.NETWORKS)
def test_host_only_speedup_is_exactly_one(cluster, net):
    r = Pipeline(cluster).run(fixtures.network(net), 0, SyncModel.from_cluster(cluster))
    assert r.speedup_vs_host == 1.0
    assert r.sync_time == 0.0


def test_identical_nodes_double_throughput(cluster):
    csd = cluster.csds[0]
    pair = ClusterSpec(None, cluster.csds[:2], 1e8)
    net = fixtures.network("mobilenetv2")
    tune = tune_cluster(pair, net)
    plan = balance_epoch(tune, DatasetSpec(1000, {"csd0": 500, "csd1": 500}))
    r = simulate_epoch(pair, net, tune, plan, SyncModel(0.0, 1e30))
    assert r.images_per_second_aggregate == pytest.approx(2 * csd.curve(net.name).saturation_throughput)
    assert r.stall_seconds_per_step == {"csd0": 0.0, "csd1": 0.0}


def test_stalls_are_barrier_waits(cluster):
    net = fixtures.network("mobilenetv2")
    sub = cluster.with_csds(2)
    tune = tune_cluster(sub, net)
    plan = balance_epoch(tune, default_dataset(sub))
    r = simulate_epoch(sub, net, tune, plan, SyncModel.from_cluster(cluster))
    compute = {n: t.step_time for n, t in tune.per_node.items()}
    barrier = max(compute.values())
    for n, s in r.stall_seconds_per_step.items():
        assert s == pytest.approx(barrier - compute[n])
    assert r.round_time == pytest.approx(barrier + r.sync_time)
    assert r.epoch_time == pytest.approx(r.round_time * plan.epoch_steps)


def test_mismatched_inputs_rejected(cluster):
    net = fixtures.network("mobilenetv2")
    sub = cluster.with_csds(2)
    tune = tune_cluster(sub, net)
    plan = balance_epoch({"host": 10, "csd0": 5}, DatasetSpec(1000))
    with pytest.raises(InconsistentInputError):
        simulate_epoch(sub, net, tune, plan, SyncModel())


@pytest.mark.parametrize("net", fixtures.NETWORKS)
def test_speedup_never_exceeds_ideal_aggregate(cluster, net):
    d = fixtures.network(net)
    host = cluster.host.curve(net).saturation_throughput
    csd = cluster.csds[0].curve(net).saturation_throughput
    for n, r in speedup_curve(cluster, d, range(0, 25, 4), SyncModel.from_cluster(cluster)):
        assert r.speedup_vs_host <= (host + n * csd) / host + 1e-12


def test_speedup_curve_checks_counts(cluster, mobilenet):
    with pytest.raises(ValidationError):
        speedup_curve(cluster, mobilenet, [4, 2], SyncModel())
    with pytest.raises(ValidationError):
        speedup_curve(cluster, mobilenet, [25], SyncModel())


def test_energy_fields(cluster, mobilenet):
    e = EnergyModelParams.from_cluster(cluster)
    r = Pipeline(cluster).run(mobilenet, 8, SyncModel.from_cluster(cluster), e)
    assert r.energy_per_image_joules == pytest.approx(r.total_watts / r.images_per_second_aggregate)
    assert r.energy_saving_vs_baseline == pytest.approx(
        1 - r.energy_per_image_joules / (e.baseline_watts() / r.host_plateau)
    )
    assert r.flops_per_watt == pytest.approx(mobilenet.flop_count / r.energy_per_image_joules)
    assert len(r.csv_row()) == 7


def test_default_dataset_split(cluster):
    d = default_dataset(cluster.with_csds(5), 100, 12)
    assert d.private_per_node == {"csd0": 3, "csd1": 3, "csd2": 2, "csd3": 2, "csd4": 2}
