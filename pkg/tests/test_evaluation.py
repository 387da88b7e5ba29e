import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from graphlef.dataset import LabeledDataset, gen_gaussian_with_planted_outlier, make_outlier_trials
from graphlef.evaluation import (
    PAPER_K_RANGE,
    ROAD_K_VALUES,
    AucCurve,
    aggregate_dataset,
    auc_single_outlier,
    compare_methods,
    plot_data,
    read_plot_data,
    read_report_csv,
    report_to_csv,
    report_to_json,
    sweep_k,
    write_plot_data,
)
from graphlef.scores import HIGHER_IS_INLIER, HIGHER_IS_OUTLIER, ScoreResult


def sr(values, orientation=HIGHER_IS_OUTLIER):
    return ScoreResult(np.asarray(values, dtype=float), orientation, "x", 1)


def test_auc_examples():
    assert auc_single_outlier(sr([0.1, 0.2, 0.3, 0.9]), 3) == 1.0
    assert auc_single_outlier(sr([0.5, 0.5, 0.5, 0.5]), 0) == 0.5
    assert auc_single_outlier(sr([0.1, 0.2, 0.9], HIGHER_IS_INLIER), 2) == 0.0
    # one win, one tie, one loss
    assert auc_single_outlier(sr([0.1, 0.2, 0.3, 0.2]), 3) == 0.5


def test_auc_bad_index():
    with pytest.raises(IndexError):
        auc_single_outlier(sr([1.0, 2.0]), 2)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=30),
    st.data(),
)
def test_auc_matches_oracle_and_orientation_flip(values, data):
    o = data.draw(st.integers(0, len(values) - 1))
    a = auc_single_outlier(sr(values), o)
    assert a == oracles.auc(values, o)
    assert 0.0 <= a <= 1.0
    flipped = auc_single_outlier(sr([-v for v in values], HIGHER_IS_INLIER), o)
    assert flipped == a


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_auc_rank_invariance(seed):
    rng = np.random.default_rng(seed)
    v = rng.integers(0, 10, size=int(rng.integers(2, 40))).astype(float)
    o = int(rng.integers(0, v.size))
    # random strictly increasing map: cumulative positive steps on the sorted uniques
    uniq = np.unique(v)
    steps = np.cumsum(rng.random(uniq.size) + 1e-3) * rng.choice([1e-3, 1.0, 1e3])
    mapped = steps[np.searchsorted(uniq, v)]
    assert auc_single_outlier(sr(mapped), o) == auc_single_outlier(sr(v), o)


def test_aggregate_examples():
    c = AucCurve("t", "m", np.arange(3, 6), np.full(3, 0.8))
    a = aggregate_dataset([c])
    assert a.auc_max == pytest.approx(0.8) and a.auc_avg == pytest.approx(0.8)
    c1 = AucCurve("a", "m", np.array([3, 4]), np.array([1.0, 0.5]))
    c2 = AucCurve("b", "m", np.array([3, 4]), np.array([0.8, 0.6]))
    a = aggregate_dataset([c1, c2])
    assert a.auc_max == pytest.approx(0.9)
    assert a.auc_avg == pytest.approx((0.75 + 0.7) / 2)
    assert a.auc_max_std == pytest.approx(0.1)
    with pytest.raises(ValueError):
        aggregate_dataset([])


def test_paper_k_range_has_98_values():
    assert len(PAPER_K_RANGE) == 98 and PAPER_K_RANGE[0] == 3 and PAPER_K_RANGE[-1] == 100
    # the per-trial mean over the sweep divides by the number of k values
    c = AucCurve("t", "m", np.array(PAPER_K_RANGE), np.linspace(0, 1, 98))
    assert aggregate_dataset([c]).auc_avg == pytest.approx(np.linspace(0, 1, 98).sum() / 98)


def test_sweep_ulef_on_planted_outlier():
    d = gen_gaussian_with_planted_outlier(50, 2, 10.0, seed=0)
    (trial,) = make_outlier_trials(d)
    curve = sweep_k(trial, "ulef", range(3, 21))
    assert curve.k.tolist() == list(range(3, 21))
    np.testing.assert_array_equal(curve.auc, 1.0)
    again = sweep_k(trial, "ulef", range(3, 21))
    assert again.auc.tobytes() == curve.auc.tobytes()


def test_sweep_road_k_values():
    d = gen_gaussian_with_planted_outlier(120, 3, 10.0, seed=4)
    (trial,) = make_outlier_trials(d)
    curve = sweep_k(trial, "lof", ROAD_K_VALUES)
    assert len(curve) == 6


def test_sweep_infeasible_k_recorded():
    d = gen_gaussian_with_planted_outlier(10, 2, 10.0, seed=0)
    (trial,) = make_outlier_trials(d)
    curve = sweep_k(trial, "tlef", [2, 3, 5, 10, 11])
    assert curve.k.tolist() == [3, 5, 10]
    assert set(curve.errors) == {2, 11}


def test_sweep_uses_cached_distances_identically():
    from graphlef.knn import pairwise_sq_distances

    rng = np.random.default_rng(5)
    X = rng.random((40, 3))
    y = np.zeros(40, dtype=bool)
    y[[4, 30]] = True
    d = LabeledDataset(X, y)
    D2 = pairwise_sq_distances(X)
    for t in make_outlier_trials(d):
        a = sweep_k(t, "uslef", [3, 5, 8])
        b = sweep_k(t, "uslef", [3, 5, 8], sq_dist=D2)
        assert a.auc.tobytes() == b.auc.tobytes()


def _two_outlier_dataset():
    rng = np.random.default_rng(2)
    X = np.vstack([rng.normal(size=(30, 2)), [[8.0, 0.0], [0.0, -9.0]]])
    y = np.zeros(32, dtype=bool)
    y[30:] = True
    return LabeledDataset(X, y, name="two")


def test_compare_methods_shape():
    rep = compare_methods(_two_outlier_dataset(), ["ulef", "lof"], [3, 5, 7])
    assert len(rep) == 2
    assert [c.method for c in rep.cells] == ["lof", "ulef"]
    for c in rep.cells:
        assert len(c.curves) == 2 and all(len(cv) == 3 for cv in c.curves)
        assert c.aggregate.auc_max >= c.aggregate.auc_avg
        assert 0 <= c.aggregate.auc_avg <= 1


def test_compare_methods_opposite_orientations():
    d = gen_gaussian_with_planted_outlier(50, 2, 10.0, seed=0)
    rep = compare_methods(d, ["ulef", "knn"], [5, 10])
    for c in rep.cells:
        assert c.aggregate.auc_max == 1.0 and c.aggregate.auc_avg == 1.0


def test_compare_methods_empty():
    assert len(compare_methods(_two_outlier_dataset(), [], [3])) == 0


def test_compare_methods_cell_failure_is_isolated():
    rep = compare_methods(_two_outlier_dataset(), ["tlef", "knn"], [1, 2])
    assert rep.cell("two", "tlef").error
    assert rep.cell("two", "knn").error is None


def test_compare_methods_threads_identical():
    d = _two_outlier_dataset()
    ref = report_to_json(compare_methods(d, ["ulef", "tslef", "lof"], [3, 6], n_jobs=1))
    for n in (2, 8):
        assert report_to_json(compare_methods(d, ["ulef", "tslef", "lof"], [3, 6], n_jobs=n)) == ref


def test_report_exports(tmp_path):
    rep = compare_methods(_two_outlier_dataset(), ["ulef", "lof"], list(ROAD_K_VALUES[:2]))
    report_to_csv(rep, tmp_path / "r.csv")
    rows = read_report_csv(tmp_path / "r.csv")
    assert [r["method"] for r in rows] == ["lof", "ulef"]
    assert rows[0]["auc_max"] == rep.cells[0].aggregate.auc_max
    paths = write_plot_data(rep, tmp_path / "plot")
    for p, c in zip(paths, rep.cells):
        k, a = read_plot_data(p)
        assert k.tolist() == [5, 15]
        np.testing.assert_array_equal(a, c.mean_curve()[1])
        assert len(p.read_text().splitlines()) == 2
    assert plot_data(rep.cells[0]).count("\n") == 2
