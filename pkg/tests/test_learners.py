import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from riskrec.learners import (
    ConstantModel,
    LearnerSpec,
    fit,
    fit_classifier,
    fit_regressor,
    rmse,
)
from riskrec.learners.tree import grow_effect_tree, grow_regression_tree


def brute_stump(X, y):
    """Best single split by exhaustive search over midpoints (lowest SSE)."""
    best = (np.sum((y - y.mean()) ** 2), None, None)
    for j in range(X.shape[1]):
        vals = np.unique(X[:, j])
        for a, b in zip(vals, vals[1:]):
            thr = (a + b) / 2
            left = X[:, j] <= thr
            sse = np.sum((y[left] - y[left].mean()) ** 2) + \
                np.sum((y[~left] - y[~left].mean()) ** 2)
            if sse < best[0] - 1e-9:
                best = (sse, j, thr)
    return best


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_stump_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 6, size=(40, 3)).astype(float)
    y = rng.normal(size=40) + (X[:, 1] > 2)
    tree = grow_regression_tree(X, y, max_depth=1, min_leaf=1)
    sse, j, thr = brute_stump(X, y)
    pred = tree.predict(X)
    assert np.sum((y - pred) ** 2) == pytest.approx(sse, rel=1e-9, abs=1e-9)
    if j is not None:
        assert tree.feature[0] == j and tree.threshold[0] == pytest.approx(thr)


def test_deep_tree_interpolates_distinct_rows():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(64, 2))
    y = rng.normal(size=64)
    tree = grow_regression_tree(X, y, max_depth=20, min_leaf=1)
    np.testing.assert_allclose(tree.predict(X), y)


@pytest.mark.parametrize("min_leaf", [1, 5, 20])
def test_min_leaf_respected(min_leaf):
    rng = np.random.default_rng(1)
    X = rng.normal(size=(200, 3))
    y = X[:, 0] + rng.normal(size=200)
    tree = grow_regression_tree(X, y, max_depth=8, min_leaf=min_leaf)
    assert np.bincount(tree.apply(X)).max() >= 1
    sizes = np.bincount(tree.apply(X))
    assert sizes[sizes > 0].min() >= min_leaf


def test_effect_tree_finds_heterogeneity():
    rng = np.random.default_rng(2)
    n = 4000
    X = rng.normal(size=(n, 3))
    t = (rng.random(n) < 0.5).astype(float)
    tau = np.where(X[:, 2] > 0, 3.0, -1.0)
    y = X[:, 0] + t * tau + rng.normal(0, 0.3, n)
    tree = grow_effect_tree(X, y, t, max_depth=1, min_leaf=50)
    assert tree.feature[0] == 2
    assert abs(tree.threshold[0]) < 0.1
    np.testing.assert_allclose(np.sort(np.unique(tree.predict(X))), [-1.0, 3.0], atol=0.1)


def test_effect_tree_bad_mode():
    with pytest.raises(ValueError, match="mode"):
        grow_effect_tree(np.zeros((4, 1)), np.zeros(4), np.array([0, 1, 0, 1.0]), mode="x")


def test_linear_matches_lstsq():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(100, 4))
    y = X @ [1.0, -2.0, 0.5, 0.0] + 3 + rng.normal(0, 0.1, 100)
    model = fit_regressor(LearnerSpec.linear(), X, y)
    A = np.column_stack([np.ones(100), X])
    beta = np.linalg.lstsq(A, y, rcond=None)[0]
    np.testing.assert_allclose(model.predict(X), A @ beta, atol=1e-8)


def test_logistic_matches_direct_optimiser():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(300, 2))
    y = (rng.random(300) < 1 / (1 + np.exp(-(X[:, 0] - 0.5 * X[:, 1])))).astype(float)
    model = fit_classifier(LearnerSpec.logistic(alpha=1e-8), X, y)

    def nll(b):
        eta = b[0] + X @ b[1:]
        return np.sum(np.logaddexp(0, eta) - y * eta)

    ref = minimize(nll, np.zeros(3), method="BFGS", options={"gtol": 1e-10}).x
    p_ref = 1 / (1 + np.exp(-(ref[0] + X @ ref[1:])))
    np.testing.assert_allclose(model.predict(X), p_ref, atol=1e-5)


def test_ridge_shrinks_toward_mean():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(50, 3))
    y = X[:, 0] * 4 + rng.normal(size=50)
    loose = fit_regressor(LearnerSpec.ridge(alpha=1e-6), X, y).predict(X)
    tight = fit_regressor(LearnerSpec.ridge(alpha=1e6), X, y).predict(X)
    assert np.std(tight) < 0.01 * np.std(loose)


@pytest.mark.parametrize("spec", [
    LearnerSpec.tree(max_depth=4),
    LearnerSpec.forest(n_trees=10, max_depth=4),
    LearnerSpec.gbm(n_rounds=30, max_depth=2),
])
def test_tree_learners_beat_constant_and_are_seeded(spec):
    rng = np.random.default_rng(6)
    X = rng.normal(size=(400, 3))
    y = np.sin(2 * X[:, 0]) + rng.normal(0, 0.2, 400)
    a = fit_regressor(spec, X, y)
    b = fit_regressor(spec, X, y)
    np.testing.assert_array_equal(a.predict(X), b.predict(X))
    assert rmse(a, X, y) < 0.7 * np.std(y)


def test_gbm_classifier_probabilities():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(500, 2))
    y = (X[:, 0] > 0).astype(float)
    p = fit_classifier(LearnerSpec.gbm(n_rounds=30, max_depth=2), X, y).predict(X)
    assert np.all((p >= 0) & (p <= 1))
    assert np.mean((p > 0.5) == y) > 0.95


@pytest.mark.parametrize("X, y, msg", [
    (np.zeros(5), np.zeros(5), "2-D"),
    (np.zeros((5, 2)), np.zeros(4), "targets"),
    (np.zeros((1, 2)), np.zeros(1), "at least 2"),
    (np.array([[np.nan], [1.0]]), np.zeros(2), "finite"),
])
def test_input_validation(X, y, msg):
    with pytest.raises(ValueError, match=msg):
        fit_regressor(LearnerSpec.linear(), X, y)


def test_classifier_needs_two_classes():
    with pytest.raises(ValueError, match="single class"):
        fit_classifier(LearnerSpec.logistic(), np.zeros((5, 1)), np.ones(5))


def test_predict_dimension_mismatch():
    model = fit(LearnerSpec.forest(n_trees=2), np.random.default_rng(0).normal(size=(30, 3)),
                np.arange(30.0))
    with pytest.raises(ValueError, match="dimension"):
        model.predict(np.zeros((2, 4)))
    with pytest.raises(ValueError, match="dimension"):
        ConstantModel(1.0, 3).predict(np.zeros((2, 2)))


@pytest.mark.parametrize("kw", [dict(kind="svm"), dict(kind="ridge", alpha=0),
                                dict(kind="tree", min_leaf=0), dict(kind="gbm", learning_rate=2)])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        LearnerSpec(**kw)


@pytest.mark.parametrize("spec", [LearnerSpec.linear(), LearnerSpec.logistic(0.5),
                                  LearnerSpec.forest(7, 3, 2, seed=9), LearnerSpec.gbm(12)])
def test_spec_round_trip(spec):
    assert LearnerSpec.from_dict(spec.to_dict()) == spec
