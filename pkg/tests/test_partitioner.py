import pytest
from hypothesis import given, settings, strategies as st

from csdtrain.errors import InsufficientDataError, UnknownNodeError
from csdtrain.partitioner import (
    DatasetSpec,
    PartitionPlan,
    _distinct,
    balance_epoch,
    choose_epoch_steps,
    host_dataset_size,
    validate_plan,
)


def test_host_dataset_size_drop_remainder():
    assert host_dataset_size(500, 25, 315) == 20 * 315
    assert host_dataset_size(24, 25, 315) == 0
    with pytest.raises(ValueError):
        host_dataset_size(0, 1, 1)


def test_default_style_plan():
    batches = {"host": 194, **{f"csd{i}": 25 for i in range(4)}}
    data = DatasetSpec(72000, {f"csd{i}": 500 for i in range(4)})
    plan = balance_epoch(batches, data)
    assert validate_plan(plan, batches, data) == []
    assert plan.epoch_steps == choose_epoch_steps(batches, data)
    # Every CSD keeps its whole private set and no public data goes unused while duplicating.
    for i in range(4):
        a = plan.per_node[f"csd{i}"]
        assert a.private_assigned == 500 and a.private_owner == f"csd{i}"


def test_duplication_only_when_public_exhausted():
    batches = {"a": 10, "b": 10}
    data = DatasetSpec(5, {"a": 100, "b": 20})
    plan = balance_epoch(batches, data)
    assert validate_plan(plan, batches, data) == []
    assert sum(a.public_assigned for a in plan.per_node.values()) == 5
    assert plan.per_node["b"].duplicated_private > 0


def test_public_only_nodes_bound_steps():
    with pytest.raises(InsufficientDataError):
        balance_epoch({"host": 100}, DatasetSpec(50))
    plan = balance_epoch({"host": 10, "c": 1}, DatasetSpec(35, {"c": 1000}))
    assert plan.epoch_steps == 3


def test_unknown_private_owner():
    with pytest.raises(UnknownNodeError):
        balance_epoch({"a": 1}, DatasetSpec(10, {"zz": 3}))


def test_validate_plan_catches_tampering():
    batches = {"a": 4, "b": 2}
    data = DatasetSpec(30, {"a": 8, "b": 8})
    plan = balance_epoch(batches, data)
    obj = plan.to_json()
    obj["per_node"]["b"]["private_owner"] = "a"
    bad = PartitionPlan.from_json(obj)
    assert any("privacy" in v for v in validate_plan(bad, batches, data))
    obj = plan.to_json()
    obj["per_node"]["a"]["steps"] += 1
    assert validate_plan(PartitionPlan.from_json(obj), batches, data)


def test_plan_json_and_manifest():
    batches = {"a": 3, "b": 2}
    data = DatasetSpec(7, {"b": 4})
    plan = balance_epoch(batches, data)
    assert PartitionPlan.from_json(plan.to_json()).to_json() == plan.to_json()
    rows = list(plan.manifest_rows())
    assert len(rows) == sum(a.total for a in plan.per_node.values())
    assert all(sid.startswith("b:") for node, src, sid in rows if src != "public")
    assert plan.manifest_csv().splitlines()[0] == "node_id,source,sample_id"


batches_st = st.dictionaries(st.sampled_from([f"n{i}" for i in range(6)]), st.integers(1, 40), min_size=1)


@settings(max_examples=150, deadline=None)
@given(batches_st, st.integers(0, 300), st.data())
def test_epoch_steps_is_smallest_maximiser(batches, public, data):
    priv = {n: data.draw(st.integers(0, 200)) for n in batches}
    spec = DatasetSpec(public, {n: p for n, p in priv.items() if p})
    try:
        steps = choose_epoch_steps(batches, spec)
    except InsufficientDataError:
        public_only = sum(b for n, b in batches.items() if spec.private(n) == 0)
        assert public_only > public
        return
    public_only = sum(b for n, b in batches.items() if spec.private(n) == 0)
    feasible = range(1, 1600) if not public_only else range(1, public // public_only + 1)
    best = max(_distinct(s, batches, spec) for s in feasible)
    assert _distinct(steps, batches, spec) == best
    assert all(_distinct(s, batches, spec) < best for s in range(1, steps))
