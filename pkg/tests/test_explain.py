import csv
import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ocpredict.explain import (
    ExplainError,
    ExplanationBucket,
    aggregate_explanations,
    bucket_stats,
    discretize_feature,
    exact_shapley,
    export_boxplot,
    mc_shapley,
    sample_background,
)
from ocpredict.learn import GbdtConfig, fit_gbdt
from ocpredict.model import MISSING


def additive(X):
    return X[:, 0] + X[:, 1]


def centered_background(seed=0, n=200, p=2):
    B = np.random.default_rng(seed).normal(size=(n, p))
    return B - B.mean(axis=0)


def tree_model(seed, p=6, n=300, used=None):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    used = list(range(p)) if used is None else used
    y = sum(np.sin(X[:, j] * (j + 1)) for j in used) + X[:, used[0]] * X[:, used[-1]]
    return fit_gbdt(X, y, GbdtConfig(n_trees=25, max_depth=3)), X


def test_zero_model():
    B = centered_background()
    v = exact_shapley(lambda X: np.zeros(len(X)), np.array([1.0, 2.0]), B)
    assert np.all(v.values == 0)


def test_additive_model_recovers_inputs():
    B = centered_background()
    v = exact_shapley(additive, np.array([1.5, -2.0]), B)
    assert v.values == pytest.approx([1.5, -2.0], abs=1e-12)


def test_single_feature_gets_everything():
    B = centered_background(p=1)
    v = exact_shapley(lambda X: X[:, 0] ** 2, np.array([3.0]), B)
    assert v.values[0] == pytest.approx(v.prediction - v.base_value)


def test_exact_arity_limit():
    with pytest.raises(ExplainError, match="mc_shapley"):
        exact_shapley(additive, np.zeros(13), np.zeros((2, 13)))


def test_model_object_or_callable():
    m, X = tree_model(0, p=3)
    a = exact_shapley(m, X[0], X[:50])
    b = exact_shapley(m.predict, X[0], X[:50])
    assert np.array_equal(a.values, b.values)


@given(st.integers(0, 10**6), st.integers(2, 8))
def test_efficiency_on_tree_models(seed, p):
    m, X = tree_model(seed % 50, p=p)
    x = np.random.default_rng(seed).normal(size=p)
    v = exact_shapley(m, x, X[:100])
    gap = v.prediction - v.base_value
    assert abs(v.values.sum() - gap) <= 1e-9 * max(1.0, abs(gap))


def test_symmetry():
    rng = np.random.default_rng(0)
    B = rng.normal(size=(80, 3))
    B[:, 1] = B[:, 0]
    f = lambda X: X[:, 0] * 2 + X[:, 1] * 2 + X[:, 0] * X[:, 1] + X[:, 2]  # noqa: E731
    v = exact_shapley(f, np.array([0.7, 0.7, -1.0]), B)
    assert v.values[0] == pytest.approx(v.values[1], abs=1e-12)


def test_dummy_feature():
    m, X = tree_model(2, p=5, used=[0, 2])
    free = [j for j in range(5) if j not in m.used_features()]
    assert free
    v = exact_shapley(m, X[3], X[:100])
    assert np.all(v.values[free] == 0)


def test_mc_close_to_exact_on_additive_model():
    B = centered_background()
    x = np.array([1.5, -2.0])
    exact = exact_shapley(additive, x, B).values
    est = mc_shapley(additive, x, B, n_permutations=2000, seed=3).values
    assert np.all(np.abs(est - exact) <= 0.05 * np.abs(exact))


def test_mc_errors_and_determinism():
    B = centered_background()
    with pytest.raises(ExplainError):
        mc_shapley(additive, np.zeros(2), B, n_permutations=0)
    with pytest.raises(ExplainError):
        mc_shapley(additive, np.zeros(2), np.zeros((0, 2)))
    a = mc_shapley(additive, np.ones(2), B, 100, seed=9)
    b = mc_shapley(additive, np.ones(2), B, 100, seed=9)
    assert np.array_equal(a.values, b.values)


def test_mc_error_shrinks_with_permutations():
    m, X = tree_model(5, p=8)
    B = X[:60]
    x = X[200]
    exact = exact_shapley(m, x, B).values
    errs = []
    for n in (20, 200, 2000):
        e = [np.abs(mc_shapley(m, x, B, n, seed=s).values - exact).mean() for s in range(8)]
        errs.append(np.mean(e))
    assert errs[0] > errs[1] > errs[2]


def test_background_sampling():
    X = np.arange(2000, dtype=float).reshape(1000, 2)
    B = sample_background(X, 500, seed=1)
    assert B.shape == (500, 2)
    assert np.array_equal(B, sample_background(X, 500, seed=1))
    assert sample_background(X[:10], 500).shape == (10, 2)


# -- discretization and buckets -------------------------------------------------------


def test_discretize_examples():
    assert discretize_feature([1, 2, 10, 11], [0, 0, 1, 1]) == [6.0]
    assert discretize_feature([3, 3, 3], [1, 2, 3]) == []
    thr = discretize_feature(range(8), range(8), max_buckets=4)
    assert 1 <= len(thr) <= 3 and thr == sorted(thr)


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=40), st.integers(1, 6), st.integers(0, 1000))
def test_discretize_bucket_bound(values, max_buckets, seed):
    labels = np.random.default_rng(seed).normal(size=len(values))
    thr = discretize_feature(values, labels, max_buckets)
    assert len(thr) <= max_buckets - 1
    assert thr == sorted(thr)


def test_single_bucket_cases():
    b = aggregate_explanations([[0.4]], [(2.0,)], ["f"], {})
    assert len(b) == 1 and b[0].samples == [0.4]
    pooled = aggregate_explanations([[1.0], [2.0], [3.0]], [(1.0,), (5.0,), (9.0,)], ["f"], {"f": []})
    assert len(pooled) == 1 and pooled[0].samples == [1.0, 2.0, 3.0]


def test_bucket_order_by_absolute_mean():
    names = ["%ORDER_PURCH_GROUP=100_L50", "#Orders"]
    phi = [[-15.0, 8.0], [-15.0, 8.0]]
    vals = [(0.5, 3.0), (0.6, 4.0)]
    buckets = aggregate_explanations(phi, vals, names, {names[0]: [0.33], names[1]: [2.5]})
    assert buckets[0].label == "%ORDER_PURCH_GROUP=100_L50 >= 0.33"
    assert buckets[0].mean == -15 and buckets[1].mean == 8


def test_categorical_and_missing_buckets():
    phi = [[1.0, 0.1], [2.0, 0.2], [3.0, 0.3]]
    vals = [("a", MISSING), ("b", 1.0), ("a", 4.0)]
    buckets = aggregate_explanations(phi, vals, ["cat", "num"], {"num": [2.0]}, categorical=[True, False])
    labels = {b.label: b.samples for b in buckets}
    assert labels["cat = a"] == [1.0, 3.0] and labels["cat = b"] == [2.0]
    assert labels["num = missing"] == [0.1]
    assert labels["num < 2"] == [0.2] and labels["num >= 2"] == [0.3]


@given(st.integers(0, 10**6))
def test_bucket_routing_is_total(seed):
    rng = np.random.default_rng(seed)
    n, p = 30, 3
    vals = rng.normal(size=(n, p))
    phi = rng.normal(size=(n, p))
    thresholds = {f"f{j}": sorted(rng.normal(size=int(rng.integers(0, 4))).tolist()) for j in range(p)}
    buckets = aggregate_explanations(phi, vals.tolist(), [f"f{j}" for j in range(p)], thresholds)
    for j in range(p):
        mine = [b for b in buckets if b.feature == f"f{j}"]
        assert sum(len(b.samples) for b in mine) == n
        for r in range(n):
            assert sum(b.contains(vals[r, j]) for b in mine) == 1
    means = [abs(b.mean) for b in buckets]
    assert means == sorted(means, reverse=True)


def test_boxplot_statistics():
    s = bucket_stats([1, 2, 3, 4, 5])
    assert (s["q1"], s["median"], s["q3"]) == (2, 3, 4)
    table, svg = export_boxplot([ExplanationBucket("f", "f < 1", samples=[1, 2, 3, 4, 5])], top_k=3)
    rows = list(csv.reader(io.StringIO(table.decode())))
    assert rows[0] == ["bucket", "min", "q1", "median", "q3", "max", "mean", "count"]
    assert rows[1][0] == "f < 1" and float(rows[1][3]) == 3 and rows[1][7] == "5"
    assert svg.startswith("<svg") and svg.count("<rect") == 2


def test_boxplot_top_k_and_empty():
    buckets = [ExplanationBucket("f", f"b{k}", samples=[float(k)]) for k in range(3)]
    table, _ = export_boxplot(buckets, top_k=10)
    assert len(table.decode().strip().splitlines()) == 4
    table, svg = export_boxplot([], top_k=1)
    assert table.decode().strip().splitlines() == ["bucket,min,q1,median,q3,max,mean,count"]
    assert "<svg" in svg and svg.count("<rect") == 1
    with pytest.raises(ExplainError):
        export_boxplot(buckets, top_k=0)


def test_tukey_whiskers_flag_outliers():
    s = bucket_stats([1, 2, 3, 4, 100])
    assert s["whisker_high"] == 4 and s["max"] == 100
    _, svg = export_boxplot([ExplanationBucket("f", "f", samples=[1, 2, 3, 4, 100])])
    assert svg.count("<circle") == 1
