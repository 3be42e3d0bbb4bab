import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csdtrain import fixtures
from csdtrain.errors import (
    BenchmarkFormatError,
    CurveFitError,
    DuplicateRecordError,
    ModelDoesNotFitError,
    NonPositiveValueError,
)
from csdtrain.profiles import (
    GIB,
    UNBOUNDED_BATCH,
    BenchmarkRecord,
    ClusterSpec,
    NetworkDescriptor,
    NodeProfile,
    build_cluster,
    dump_benchmark,
    fit_curve,
    load_benchmark,
    max_batch_for_memory,
)


def write(tmp_path, text, name="bench.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_shipped_benchmarks_load_and_cover_cluster(cluster):
    recs = load_benchmark(fixtures.data_path("benchmarks.csv"))
    ids = {r.node_id for r in recs}
    assert ids == {n.node_id for n in cluster.nodes}
    assert {r.network for r in recs} == set(fixtures.NETWORKS)


def test_csv_comments_and_blank_lines_are_skipped(tmp_path):
    p = write(tmp_path, "# note\n\nnode_id,network,batch_size,images_per_sec\nh,n,8,2.5\n# tail\n")
    assert load_benchmark(p) == [BenchmarkRecord("h", "n", 8, 2.5)]


@pytest.mark.parametrize(
    "body, err, line",
    [
        ("node,network,batch_size,images_per_sec\n", BenchmarkFormatError, 1),
        ("node_id,network,batch_size,images_per_sec\nh,n,8\n", BenchmarkFormatError, 2),
        ("node_id,network,batch_size,images_per_sec\nh,n,8,x\n", BenchmarkFormatError, 2),
        ("node_id,network,batch_size,images_per_sec\nh,n,8.5,1\n", BenchmarkFormatError, 2),
        ("node_id,network,batch_size,images_per_sec\nh,n,8,1\nh,n,0,1\n", NonPositiveValueError, 3),
        ("node_id,network,batch_size,images_per_sec\nh,n,8,-1\n", NonPositiveValueError, 2),
        ("node_id,network,batch_size,images_per_sec\nh,n,8,1\n\nh,n,8,2\n", DuplicateRecordError, 4),
    ],
)
def test_bad_csv_reports_line(tmp_path, body, err, line):
    with pytest.raises(err) as info:
        load_benchmark(write(tmp_path, body))
    assert info.value.location == f"line {line}"


def test_json_format_and_roundtrip(tmp_path):
    recs = [BenchmarkRecord("a", "n", 4, 1.0 / 3), BenchmarkRecord("a", "n", 8, 0.7)]
    for fmt, name in (("csv", "r.csv"), ("json", "r.json")):
        p = tmp_path / name
        dump_benchmark(recs, p, fmt)
        assert load_benchmark(p) == recs


def test_json_bad_record(tmp_path):
    p = write(tmp_path, json.dumps([{"node_id": "a", "network": "n", "batch_size": 4}]), "b.json")
    with pytest.raises(BenchmarkFormatError) as info:
        load_benchmark(p)
    assert info.value.location == "record 0"


def test_fit_curve_plateau_and_interpolation():
    c = fit_curve([(8, 2.05), (16, 3.0), (25, 3.08), (32, 3.08), (64, 3.08)])
    assert c.saturation_batch == 25
    assert c.saturation_throughput == 3.08
    assert c.throughput(1000) == 3.08
    assert c.throughput(12) == pytest.approx((2.05 + 3.0) / 2)
    # Below the first sample the curve goes through the origin.
    assert c.throughput(4) == pytest.approx(2.05 / 2)
    assert c.step_time(25) == pytest.approx(25 / 3.08)


def test_fit_curve_snaps_within_tolerance_to_plateau():
    c = fit_curve([(8, 5.0), (16, 9.9), (32, 10.0)])
    assert c.saturation_batch == 16
    assert c.fitted == (5.0, 10.0, 10.0)


def test_fit_curve_repairs_noise():
    c = fit_curve([(8, 5.0), (16, 4.0), (32, 10.0)])
    assert list(c.fitted) == sorted(c.fitted)


@pytest.mark.parametrize("samples", [[(8, 1.0)], [(8, 1.0), (8, 2.0)], [(8, 0.0), (16, 0.0)]])
def test_fit_curve_rejects_degenerate(samples):
    with pytest.raises(CurveFitError):
        fit_curve(samples)


@settings(max_examples=200, deadline=None)
@given(st.dictionaries(st.integers(1, 2048), st.floats(0.01, 1e4), min_size=2, max_size=12))
def test_fitted_curve_is_monotone_and_flat_after_saturation(points):
    c = fit_curve(list(points.items()))
    grid = range(1, max(points) + 64, 7)
    vals = [c.throughput(b) for b in grid]
    assert all(a <= b + 1e-9 for a, b in zip(vals, vals[1:]))
    assert c.throughput(c.saturation_batch) == c.saturation_throughput
    assert c.throughput(max(points) + 1000) == c.saturation_throughput


def test_memory_cap_example():
    # 6 GiB CSD, MobileNetV2 state (3 copies of fp32 params), 10 MB activations per sample.
    node = NodeProfile("csd0", "csd", {}, 6 * GIB, 4.0, 0.0)
    net = fixtures.network("mobilenetv2")
    assert net.model_bytes == 3 * 3_470_000 * 4
    assert max_batch_for_memory(node, net) == (6 * 2**30 - 41_640_000) // 10_000_000 == 640


def test_memory_cap_edge_cases():
    net = NetworkDescriptor("tiny", 1000, 1, 1, 4, 0)
    assert max_batch_for_memory(NodeProfile("x", "csd", {}, GIB, 1, 0), net) == UNBOUNDED_BATCH
    big = NetworkDescriptor("big", 10**9, 1, 1, 4, 1)
    with pytest.raises(ModelDoesNotFitError):
        max_batch_for_memory(NodeProfile("x", "csd", {}, GIB, 1, 0), big)


def test_cluster_json_roundtrip(cluster):
    again = ClusterSpec.from_json(json.loads(json.dumps(cluster.to_json())))
    assert again.to_json() == cluster.to_json()
    assert [n.node_id for n in cluster.with_csds(3).nodes] == ["host", "csd0", "csd1", "csd2"]


def test_build_cluster_from_benchmarks(cluster):
    template = cluster.to_json()
    for node in [template["host"], *template["csds"]]:
        node["curves"] = {}
    rebuilt = build_cluster(load_benchmark(fixtures.data_path("benchmarks.csv")), template)
    for net in fixtures.NETWORKS:
        assert rebuilt.node("host").curve(net) == cluster.node("host").curve(net)
        assert rebuilt.node("csd7").curve(net) == cluster.node("csd7").curve(net)


def test_table1_endpoints_are_on_shipped_curves(cluster):
    expected = {
        "mobilenetv2": ((315, 31.05), (25, 3.08)),
        "nasnet": ((325, 47.31), (15, 2.80)),
        "inceptionv3": ((370, 30.80), (16, 1.85)),
        "squeezenet": ((850, 219.0), (50, 16.3)),
    }
    for net, ((hb, ht), (cb, ct)) in expected.items():
        assert cluster.node("host").curve(net).throughput(hb) == pytest.approx(ht)
        assert cluster.node("csd0").curve(net).throughput(cb) == pytest.approx(ct)
        assert np.isclose(cluster.node("csd0").curve(net).saturation_throughput, ct)
