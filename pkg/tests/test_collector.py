import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from onebm.collector import (
    CacheStack,
    CollectedType,
    DepthFirstCollector,
    RelationalTuple,
    SamplingPolicy,
    apply_cutoff_filter,
    dfs_collect,
    estimate_join_size,
    group_by,
    identify_collected_type,
    join_histograms,
    root_index,
    sample_tuples,
)
from onebm.errors import DepthOutOfRange, OneBMError
from onebm.ingest import resolve_cutoff_column
from onebm.path_enum import TraversalMode, enumerate_paths
from onebm.relational_model import ColumnType, PathKind
from onebm.synthetic import materialize, random_database

from oracles import engine_collection, oracle_collection

FULL = TraversalMode.FULL


def collect_by_tables(db, depth=2, mode=FULL, **kw):
    plan = enumerate_paths(db, depth, mode)
    return {(tuple(c.path.tables), c.path.collected_column): c for c in dfs_collect(plan, db, **kw)}


def test_example_delay_series(toy_db):
    col = collect_by_tables(toy_db)[(("main", "delay"), "Delay")]
    assert group_by(col, 0)[1.0] == Counter({240.0: 2, 180.0: 1, 60.0: 2})


def test_example_event_tree(toy_db):
    col = collect_by_tables(toy_db)[(("main", "delay", "event"), "Event")]
    assert group_by(col, 0)[1.0] == Counter(roadwork=6, strike=4)
    groups = sorted(group_by(col, 1)[1.0], key=lambda c: sorted(c.items()))
    expected = sorted(
        [Counter(roadwork=2, strike=1), Counter(roadwork=1, strike=1)] * 2, key=lambda c: sorted(c.items())
    )
    assert groups == expected


def test_group_by_depth_out_of_range(toy_db):
    col = collect_by_tables(toy_db)[(("main", "delay"), "Delay")]
    with pytest.raises(DepthOutOfRange):
        group_by(col, 1)


def test_group_by_empty(toy_db):
    col = collect_by_tables(toy_db)[(("main", "delay"), "Delay")]
    empty = col.__class__(**{**col.__dict__, "entity_rows": col.entity_rows[:0],
                             "group_rows": col.group_rows[:, :0], "values": col.values.take(np.arange(0)),
                             "event_time": col.event_time[:0]})
    assert all(v == Counter() for v in group_by(empty, 0).values())


def test_cutoff_boundary_row_dropped(toy_db):
    col = collect_by_tables(toy_db)[(("main", "delay"), "Delay")]
    # the 120-minute delay sits exactly at message 1's cutoff
    assert 120.0 not in group_by(col, 0)[1.0]


def test_cutoff_filter_tuples():
    cut = {1: 100}
    ts = [RelationalTuple(1, (), v, t) for v, t in [(1, 10), (2, 50), (3, 99), (4, 100), (5, 130)]]
    ts.append(RelationalTuple(1, (), 6, None))
    ts.append(RelationalTuple(2, (), 7, 10_000))
    kept = apply_cutoff_filter(ts, cut)
    assert [t.value for t in kept] == [1, 2, 3, 6, 7]


def test_estimate_join_size_examples():
    assert estimate_join_size({"a": 2, "b": 3}, {"a": 4, "b": 1}) == 11
    assert estimate_join_size({"a": 2}, {"b": 1}) == 0
    assert estimate_join_size({k: 1 for k in range(7)}, {k: 1 for k in range(3, 20)}) == 4


@settings(max_examples=30, deadline=None)
@given(st.dictionaries(st.integers(0, 9), st.integers(1, 5)), st.dictionaries(st.integers(0, 9), st.integers(1, 5)))
def test_estimate_matches_nested_loop(left, right):
    lrows = [k for k, c in left.items() for _ in range(c)]
    rrows = [k for k, c in right.items() for _ in range(c)]
    assert estimate_join_size(left, right) == sum(1 for a in lrows for b in rrows if a == b)


def test_estimate_matches_join_size(toy_db):
    for path in enumerate_paths(toy_db, 2, FULL):
        idx = root_index(toy_db)
        from onebm.collector import extend_join

        for hop in path.hops:
            left, right = join_histograms(toy_db, idx, hop)
            idx = extend_join(toy_db, idx, hop)
            assert estimate_join_size(left, right) == len(idx) == idx.estimated_size


def test_prefix_join_reused(toy_db):
    collector = DepthFirstCollector(toy_db)
    plan = enumerate_paths(toy_db, 2, FULL)
    list(collector.collect(plan))
    log = [tuple(h.dst_table for h in hops) for hops in collector.stats.join_log]
    assert len(log) == len(set(log))  # every distinct prefix joined once
    assert ("delay",) in log and ("delay", "event") in log
    assert collector.stats.max_stack <= plan.max_depth


def test_cache_stack_bound():
    s = CacheStack(2)
    s.push(object())
    s.push(object())
    with pytest.raises(OneBMError):
        s.push(object())


def test_no_cache_same_result(toy_db):
    plan = enumerate_paths(toy_db, 2, FULL)
    a = [engine_collection(c) for c in DepthFirstCollector(toy_db).collect(plan)]
    b = [engine_collection(c) for c in DepthFirstCollector(toy_db, cache=False).collect(plan)]
    assert a == b


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_oracle_equivalence(seed):
    db = materialize(*random_database(seed, max_rows=60))
    cutoff = resolve_cutoff_column(db.schema.main)
    plan = enumerate_paths(db, 3, FULL)
    for col in dfs_collect(plan, db):
        assert engine_collection(col) == oracle_collection(db, col.path, cutoff)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_union_property(seed):
    db = materialize(*random_database(seed, max_rows=60))
    for col in dfs_collect(enumerate_paths(db, 3, FULL), db):
        flat = group_by(col, 0)
        for d in range(1, col.path.length):
            nested = group_by(col, d)
            for e, groups in nested.items():
                assert sum(groups, Counter()) == flat[e]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_leakage_freedom(seed):
    db = materialize(*random_database(seed, max_rows=60))
    cut = db.main.column(resolve_cutoff_column(db.schema.main)).numeric()
    for col in dfs_collect(enumerate_paths(db, 3, FULL), db):
        if col.event_time is None:
            continue
        c = cut[col.entity_rows]
        assert not np.any(col.event_time >= c)


@pytest.mark.parametrize(
    "kind, ctype, has_time, expected",
    [
        (PathKind.MULTIPLE, ColumnType.NUMERICAL, True, CollectedType.TIME_SERIES),
        (PathKind.MULTIPLE, ColumnType.NUMERICAL, False, CollectedType.NUMBER_MULTISET),
        (PathKind.ONE_TO_ONE, ColumnType.CATEGORICAL, True, CollectedType.CATEGORY_SCALAR),
        (PathKind.ONE_TO_ONE, ColumnType.CATEGORICAL, False, CollectedType.CATEGORY_SCALAR),
        (PathKind.MULTIPLE, ColumnType.CATEGORICAL, False, CollectedType.ITEM_MULTISET),
        (PathKind.MULTIPLE, ColumnType.CATEGORICAL, True, CollectedType.SEQUENCE),
        (PathKind.MULTIPLE, ColumnType.TEXT, True, CollectedType.TEXT_SET),
        (PathKind.ONE_TO_ONE, ColumnType.TIMESTAMP, False, CollectedType.TIMESTAMP_SCALAR),
    ],
)
def test_identify_collected_type(kind, ctype, has_time, expected):
    assert identify_collected_type(kind, ctype, has_time) is expected


def _tuples(sizes, timed=True, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for e, n in enumerate(sizes):
        for t in rng.permutation(n):
            out.append(RelationalTuple(e, (), float(t), int(t) if timed else None))
    return out


def test_sampling_identity_under_cap():
    ts = _tuples([3, 4])
    assert sample_tuples(ts, 7, SamplingPolicy(7), True) == ts


def test_sampling_keeps_most_recent():
    ts = _tuples([5])
    kept = sample_tuples(ts, 10, SamplingPolicy(4), True)
    assert sorted(t.event_time for t in kept) == [3, 4]


def test_sampling_deterministic():
    ts = _tuples([30, 7, 1], timed=False)
    a = sample_tuples(ts, 380, SamplingPolicy(50, seed=3), False)
    b = sample_tuples(ts, 380, SamplingPolicy(50, seed=3), False)
    assert a == b


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 40), min_size=1, max_size=10), st.integers(1, 200), st.booleans(), st.integers(0, 9))
def test_sampling_bounds(sizes, cap, timed, seed):
    ts = _tuples(sizes, timed, seed)
    est = len(ts)
    kept = sample_tuples(ts, est, SamplingPolicy(cap, seed), timed)
    per = Counter(t.entity_id for t in kept)
    for e, n in enumerate(sizes):
        bound = n if est <= cap else max(1, math.ceil(cap * n / est))
        assert 1 <= per[e] <= bound
        if timed:
            mine = sorted((t.event_time for t in kept if t.entity_id == e))
            assert mine == list(range(n - per[e], n))


def test_empty_prefix_join_is_still_cached():
    from onebm.relational_model import DatabaseSchema, Relation
    from onebm.synthetic import N, col, table

    schema = DatabaseSchema(
        "m",
        (
            table("m", [col("id", N)], "id"),
            table("a", [col("id", N), col("k", N)]),
            table("b", [col("k", N), col("v", N), col("w", N)]),
        ),
        (Relation("m", "id", "a", "id"), Relation("a", "k", "b", "k")),
    )
    # no row of ``a`` matches any entity, so every join along the branch is empty
    db = materialize(schema, {"m": {"id": ["1"]}, "a": {"id": ["9"], "k": ["1"]},
                              "b": {"k": ["1"], "v": ["2"], "w": ["3"]}})
    collector = DepthFirstCollector(db)
    cols = list(collector.collect(enumerate_paths(db, 2)))
    assert not collector.stats.failures
    assert collector.stats.joins == 2
    assert all(len(c) == 0 for c in cols)
