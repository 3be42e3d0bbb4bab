import math

import pytest
from hypothesis import given, settings, strategies as st

from csdtrain import fixtures
from csdtrain.errors import TuningError, ValidationError
from csdtrain.profiles import ClusterSpec, NodeProfile, fit_curve
from csdtrain.tuner import (
    TuneConfig,
    TuneResult,
    find_slow_node,
    select_slow_node_batch,
    tune_cluster,
    tune_fast_node,
)


def hand_recurrence(curve, slow_t, b, C=4.0, E=5.0, cap=None, max_iter=100):
    """Straight transcription of the update rule, used as an oracle."""
    for _ in range(max_iter):
        t = b / curve.throughput(b)
        if t >= slow_t * (1 - 1 / E) or (cap is not None and b >= cap):
            break
        b = b + max(1, math.floor(b * (slow_t - t) / (C * slow_t) + 0.5))
        if cap is not None:
            b = min(b, cap)
    return b


@pytest.mark.parametrize("net", fixtures.NETWORKS)
def test_fast_node_matches_hand_recurrence(cluster, net):
    host = cluster.node("host").curve(net)
    csd = cluster.node("csd0").curve(net)
    cfg = TuneConfig()
    b_slow, _, t_slow = select_slow_node_batch(csd, cfg)
    got = tune_fast_node(host, t_slow, cfg, b_slow)
    assert got.batch == hand_recurrence(host, t_slow, b_slow)
    assert got.converged
    assert list(got.trajectory) == sorted(got.trajectory)


def test_shipped_mobilenet_landing_value(cluster):
    res = tune_cluster(cluster, fixtures.network("mobilenetv2"))
    assert res.slow_node_id == "csd0"
    assert res.per_node["csd0"].batch == 25
    assert res.per_node["host"].batch == 194
    assert res.per_node["host"].iterations == 16
    assert res.margin_achieved <= 0.2


def test_slow_node_is_smallest_plateau_with_id_tiebreak(cluster):
    net = fixtures.network("mobilenetv2")
    assert find_slow_node(cluster, net) == "csd0"
    reordered = ClusterSpec(cluster.host, tuple(reversed(cluster.csds)), 1e8)
    assert find_slow_node(reordered, net) == "csd0"


def test_slow_batch_prefers_smaller_on_ties():
    c = fit_curve([(8, 1.0), (16, 2.0), (32, 2.0)])
    assert select_slow_node_batch(c, TuneConfig())[0] == 16
    assert select_slow_node_batch(c, TuneConfig(candidate_batches=(8, 12)))[0] == 12
    with pytest.raises(TuningError):
        select_slow_node_batch(c, TuneConfig(), mem_cap=4)


def test_memory_cap_stops_growth():
    fast = fit_curve([(8, 100.0), (4096, 101.0)])
    r = tune_fast_node(fast, 10.0, TuneConfig(), 8, mem_cap=50)
    assert r.batch == 50 and r.capped and not r.converged


def test_max_iterations_reports_non_convergence():
    fast = fit_curve([(8, 100.0), (4096, 101.0)])
    r = tune_fast_node(fast, 10.0, TuneConfig(max_iterations=2), 8)
    assert r.iterations == 2 and not r.converged


@pytest.mark.parametrize(
    "kw", [{"C": 0.5}, {"E": 1.0}, {"max_iterations": 0}, {"candidate_batches": (8, 4)}, {"candidate_batches": ()}]
)
def test_config_validation(kw):
    with pytest.raises(ValidationError):
        TuneConfig(**kw)


def test_tune_result_json_roundtrip(cluster):
    res = tune_cluster(cluster.with_csds(3), fixtures.network("nasnet"))
    again = TuneResult.from_json(res.to_json())
    assert again.to_json() == res.to_json()
    assert list(res.per_node) == sorted(res.per_node)


def test_homogeneous_cluster_is_untouched(cluster):
    csd = cluster.csds[0]
    twins = ClusterSpec(None, (csd, NodeProfile("csd1", "csd", csd.curves, csd.dram_bytes, 4, 0)), 1e8)
    res = tune_cluster(twins, fixtures.network("mobilenetv2"))
    assert res.batches() == {"csd0": 25, "csd1": 25}
    assert res.margin_achieved == 0


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(1.0, 500.0), min_size=2, max_size=8),
    st.floats(0.05, 50.0),
    st.integers(1, 64),
    st.floats(1.0, 8.0),
    st.floats(1.5, 10.0),
)
def test_fast_node_terminates_monotonically(tputs, slow_t, b0, C, E):
    curve = fit_curve([(8 * 2**i, t) for i, t in enumerate(tputs)])
    cfg = TuneConfig(C=C, E=E, max_iterations=100)
    r = tune_fast_node(curve, slow_t, cfg, b0, mem_cap=100_000)
    assert all(b < c for b, c in zip(r.trajectory, r.trajectory[1:]))
    assert r.iterations <= 100
    if r.converged:
        assert r.step_time >= slow_t * (1 - 1 / E)
