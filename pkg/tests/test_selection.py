import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from onebm.errors import DegenerateTable
from onebm.matrix import FeatureMatrix
from onebm.selection import (
    chi_square_filter,
    chi_square_statistic,
    contingency,
    detect_drift,
    equal_frequency_bins,
    ks_statistic,
    remove_duplicates,
    select,
)
from onebm.transforms import TargetColumn

import oracles


def matrix(cols, train=None):
    names = list(cols)
    values = np.column_stack([np.asarray(cols[n], dtype=float) for n in names]) if names else np.zeros((0, 0))
    n = values.shape[0]
    return FeatureMatrix(list(range(n)), names, values, train)


def test_duplicate_tie_break():
    m, rep = remove_duplicates(matrix({"f-b": [1, 2, 3], "f-a": [1, 2, 3]}))
    assert m.names == ["f-a"]
    assert rep.reason("f-b") == "duplicate"


def test_near_duplicates_kept():
    m, _ = remove_duplicates(matrix({"a": [1, 2, 3], "b": [1, 2, 4]}))
    assert sorted(m.names) == ["a", "b"]


def test_null_positions_matter():
    m, _ = remove_duplicates(matrix({"a": [1, np.nan, 3], "b": [1, 2, 3], "c": [1, np.nan, 3], "d": [1, -0.0, 3]}))
    assert sorted(m.names) == ["a", "b", "d"]


def test_all_null_is_constant():
    _, rep = remove_duplicates(matrix({"a": [np.nan] * 3, "b": [5, 5, np.nan]}))
    assert rep.reason("a") == "constant"
    assert rep.reason("b") == "constant"


def test_drift_rank_feature():
    n = 100
    m = matrix({"rank": np.arange(n)})
    rep = detect_drift(m, np.arange(n))
    assert rep.removed == [("rank", "drift", 1.0)]


def test_drift_noop_without_order():
    m = matrix({"rank": np.arange(10)})
    assert detect_drift(m, None).removed == []


def test_drift_stationary_kept():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=2000)
    rep = detect_drift(matrix({"u": x}), np.arange(2000))
    d = oracles.ks_statistic(list(x[:1600]), list(x[1600:]))
    assert d < 0.2
    assert rep.kept == ["u"]


def test_constant_before_drift():
    m = matrix({"c": [3.0] * 50, "x": np.arange(50)})
    _, rep = select(m, TargetColumn.from_values(list(np.arange(50.0))), np.arange(50))
    assert rep.reason("c") == "constant"


@pytest.mark.filterwarnings("ignore::RuntimeWarning")  # scipy p-value for 1-element samples
@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=40), st.lists(st.integers(-5, 5), min_size=1, max_size=40))
def test_ks_oracle(a, b):
    got = ks_statistic(np.array(a, float), np.array(b, float))
    assert oracles.rel_close(got, oracles.ks_statistic(a, b))
    assert oracles.rel_close(got, stats.ks_2samp(a, b, method="asymp").statistic)


def test_chi_square_identity_feature():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, size=200)
    stat, dof = chi_square_statistic(contingency(y, y))
    assert stat == pytest.approx(200.0)
    assert dof == 1


def test_chi_square_critical_value():
    assert stats.chi2.isf(0.05, 1) == pytest.approx(3.841, abs=1e-3)


def test_chi_square_noise_removed():
    rng = np.random.default_rng(12345)
    noise = rng.uniform(size=1000)
    y = rng.integers(0, 2, size=1000)
    target = TargetColumn.from_values([str(v) for v in y], "classification")
    rep = chi_square_filter(matrix({"noise": noise}), target)
    assert rep.removed[0][1] == "independent"
    assert rep.removed[0][2] > 0.05


def test_chi_square_degenerate():
    with pytest.raises(DegenerateTable):
        chi_square_statistic(contingency(np.zeros(5), np.arange(5) % 2))
    target = TargetColumn.from_values([str(v % 2) for v in range(6)], "classification")
    rep = chi_square_filter(matrix({"one": [1.0] * 6}), target)
    assert rep.removed[0][:2] == ("one", "constant")


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 2)), min_size=4, max_size=60))
def test_chi_square_oracle(pairs):
    a = [p[0] for p in pairs]
    b = [p[1] for p in pairs]
    if len(set(a)) < 2 or len(set(b)) < 2:
        return
    stat, dof = chi_square_statistic(contingency(np.array(a), np.array(b)))
    ref, ref_dof = oracles.chi_square(a, b)
    assert dof == ref_dof
    assert oracles.rel_close(stat, ref)


def test_equal_frequency_bins():
    assert equal_frequency_bins(np.array([1.0, 2, 2, np.nan])).tolist() == [0, 1, 1, -1]
    b = equal_frequency_bins(np.arange(100.0))
    assert len(set(b.tolist())) == 10
    assert np.bincount(b).tolist() == [10] * 10


def test_empty_matrix():
    m, rep = select(matrix({}), TargetColumn.from_values([]))
    assert m.names == [] and rep.removed == []


def _fixture(seed=0):
    rng = np.random.default_rng(seed)
    n = 1000
    y = rng.normal(size=n)
    signal = y + rng.normal(scale=0.3, size=n)
    cols = {
        "dup-a": signal.copy(),
        "dup-b": signal.copy(),
        "drift": np.arange(n) + rng.normal(scale=0.1, size=n),
        "noise": rng.normal(size=n),
    }
    return matrix(cols), TargetColumn.from_values(list(y)), np.arange(n)


def test_select_order_invariance_and_idempotence():
    m, target, order = _fixture()
    kept, rep = select(m, target, order)
    perm = FeatureMatrix(m.entity_ids, m.names[::-1], m.values[:, ::-1], m.train_mask)
    kept2, rep2 = select(perm, target, order)
    assert sorted(kept.names) == sorted(kept2.names)
    assert sorted(rep.removed, key=str) == sorted(rep2.removed, key=str)
    again, _ = select(kept, target, order)
    assert again.names == kept.names


def test_report_partition(tmp_path):
    m, target, order = _fixture()
    kept, rep = select(m, target, order)
    names = set(rep.kept) | set(rep.removed_names())
    assert names == set(m.names)
    assert not set(rep.kept) & set(rep.removed_names())
    rep.to_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "feature,reason,statistic"


def test_selection_ignores_test_rows():
    m, target, order = _fixture()
    vals = m.values.copy()
    vals[-10:] = 999.0
    y = list(target.values[:-10]) + [None] * 10
    t2 = TargetColumn.from_values(y, "regression")
    a = select(FeatureMatrix(m.entity_ids, m.names, m.values, t2.train_mask), t2, order)[0].names
    b = select(FeatureMatrix(m.entity_ids, m.names, vals, t2.train_mask), t2, order)[0].names
    assert a == b
