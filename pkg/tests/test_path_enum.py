import pytest
from hypothesis import given, settings, strategies as st

from onebm.path_enum import (
    TraversalMode,
    compute_node_depths,
    enumerate_paths,
    is_forward_hop,
)
from onebm.relational_model import DatabaseSchema, Relation
from onebm.synthetic import N, col, materialize, random_database, table

from oracles import simple_paths

FWD, FULL = TraversalMode.FORWARD_ONLY, TraversalMode.FULL


def describe(plan):
    return [(tuple(p.tables), p.collected_column) for p in plan]


def test_toy_depths(toy_db):
    assert compute_node_depths(toy_db) == {"main": 0, "delay": 1, "info": 1, "event": 1}


def test_single_table_depths():
    db = materialize(DatabaseSchema("m", (table("m", [col("id", N), col("v", N)], "id"),)),
                     {"m": {"id": ["1"], "v": ["2"]}})
    assert compute_node_depths(db) == {"m": 0}
    assert len(enumerate_paths(db, 2)) == 0


def _chain():
    schema = DatabaseSchema(
        "main",
        (
            table("main", [col("id", N)], "id"),
            table("A", [col("id", N), col("aid", N)], "aid"),
            table("B", [col("aid", N), col("v", N)]),
        ),
        (Relation("main", "id", "A", "id"), Relation("A", "aid", "B", "aid")),
    )
    return materialize(schema, {
        "main": {"id": ["1", "2"]},
        "A": {"id": ["1", "1", "2"], "aid": ["10", "11", "12"]},
        "B": {"aid": ["10", "12", "12"], "v": ["1", "2", "3"]},
    })


def test_chain_depths():
    assert compute_node_depths(_chain()) == {"main": 0, "A": 1, "B": 2}


def test_unreachable_table_warns(caplog):
    schema = DatabaseSchema(
        "m", (table("m", [col("id", N)], "id"), table("z", [col("q", N)])), ()
    )
    db = materialize(schema, {"m": {"id": ["1"]}, "z": {"q": ["1"]}})
    assert compute_node_depths(db) == {"m": 0}
    assert "unreachable" in caplog.text


def test_forward_only_excludes_lateral_hop(toy_db):
    fwd = describe(enumerate_paths(toy_db, 2, FWD))
    full = describe(enumerate_paths(toy_db, 2, FULL))
    lateral = (("main", "delay", "event"), "Event")
    assert lateral not in fwd
    assert lateral in full


def test_toy_forward_plan(toy_db):
    assert describe(enumerate_paths(toy_db, 2, FWD)) == [
        (("main", "delay"), "StationID"),
        (("main", "delay"), "Delay"),
        (("main", "info"), "Class"),
        (("main", "event"), "Event"),
    ]


def test_depth_one_uses_only_main_relations(toy_db):
    plan = enumerate_paths(toy_db, 1, FULL)
    assert all(p.length == 1 and p.hops[0].src_table == "main" for p in plan)
    assert {p.terminal_table for p in plan} == {"delay", "info", "event"}


def test_terminal_join_key_not_collected(toy_db):
    for p in enumerate_paths(toy_db, 2, FULL):
        assert p.collected_column != p.hops[-1].dst_column


def test_plan_text(toy_db):
    text = enumerate_paths(toy_db, 1, FWD).to_text()
    assert "main-[TrainID]->delay :: Delay :: multiple" in text
    assert "main-[TrainID]->info :: Class :: one_to_one" in text


def test_redundant_chain_path_dropped(chain_db):
    plan = enumerate_paths(chain_db, 2, FULL)
    tables = [tuple(p.tables) for p in plan]
    assert ("A", "B", "C") not in tables
    assert ("A", "C") in tables


def test_invalid_depth(toy_db):
    with pytest.raises(ValueError):
        enumerate_paths(toy_db, 0)


@pytest.mark.parametrize("a, b, expected", [(0, 1, True), (1, 1, False), (2, 1, False)])
def test_is_forward_hop(a, b, expected):
    assert is_forward_hop(a, b) is expected


def _adjacency(db):
    adj = {}
    for r in db.schema.relations:
        adj.setdefault(r.left_table, []).append(r.right_table)
        adj.setdefault(r.right_table, []).append(r.left_table)
    return adj


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 4))
def test_plan_properties(seed, depth):
    db = materialize(*random_database(seed, max_tables=6, max_rows=20, extra_edges=2))
    fwd = enumerate_paths(db, depth, FWD)
    full = enumerate_paths(db, depth, FULL)
    deeper = enumerate_paths(db, depth + 1, FULL)
    sig = lambda plan: {p.signature() for p in plan}
    assert sig(fwd) <= sig(full)
    assert sig(full) <= sig(deeper)
    for p in full:
        assert 1 <= p.length <= depth
        assert len(set(p.tables)) == len(p.tables)
    # DFS pre-order: every kept path's hop-prefixes come earlier (when they exist in the plan)
    seen = set()
    prefixes = {p.hops for p in full}
    for p in full:
        for k in range(1, p.length):
            if p.hops[:k] in prefixes:
                assert p.hops[:k] in seen
        seen.add(p.hops)
    # no more table sequences than exhaustive enumeration of simple paths
    oracle = set(simple_paths(_adjacency(db), "main", depth))
    assert {tuple(p.tables) for p in full} <= oracle
    assert enumerate_paths(db, depth, FULL).to_text() == full.to_text()
