import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskrec.learners import LearnerSpec
from riskrec.metalearners import (
    METHODS,
    CateMethodSpec,
    cross_fit_folds,
    default_candidates,
    fit_cate,
    fit_effect_model,
)
from riskrec.metalearners.methods import r_objective
from riskrec.treatments import LevelDataset, fit_propensity, overlap_subset

from helpers import toy_effect_data

RF = LearnerSpec.forest(n_trees=20, max_depth=5, min_leaf=10)
SPECS = {
    "direct": CateMethodSpec("direct"),
    "two_model": CateMethodSpec("two_model"),
    "causal_tree": CateMethodSpec("causal_tree"),
    "x_learner": CateMethodSpec("x_learner", RF, effect=RF),
    "r_learner": CateMethodSpec("r_learner", effect=RF),
    "causal_forest_dml": CateMethodSpec("causal_forest_dml", effect=RF),
}


@pytest.mark.parametrize("method", METHODS)
def test_recovers_average_effect(method):
    X, t, y, tau = toy_effect_data(2000, seed=1)
    est = fit_effect_model(SPECS[method], X, t, y)
    pred = est.effect(X)
    assert abs(pred.mean() - tau.mean()) < 0.15
    assert np.corrcoef(pred, tau)[0, 1] > 0.8


@pytest.mark.parametrize("method", METHODS)
def test_zero_effect_gives_small_estimates(method):
    X, t, y, _ = toy_effect_data(2000, seed=2, tau=lambda X: np.zeros(len(X)))
    pred = fit_effect_model(SPECS[method], X, t, y).effect(X)
    assert abs(pred.mean()) < 0.1 * np.std(y)


@pytest.mark.parametrize("method", METHODS)
def test_seeded_fits_are_reproducible(method):
    X, t, y, _ = toy_effect_data(400, seed=3)
    a = fit_effect_model(SPECS[method], X, t, y, seed=7).effect(X[:20])
    b = fit_effect_model(SPECS[method], X, t, y, seed=7).effect(X[:20])
    np.testing.assert_array_equal(a, b)


def test_linear_methods_recover_linear_effect_exactly():
    X, t, _, tau = toy_effect_data(500, seed=4)
    y = X[:, 1] + t * tau  # noiseless
    for spec in (SPECS["direct"], SPECS["two_model"]):
        np.testing.assert_allclose(fit_effect_model(spec, X, t, y).effect(X), tau, atol=1e-8)


@pytest.mark.parametrize("t, msg", [(np.zeros(10), "both"), (np.full(10, 2.0), "0/1")])
def test_fit_effect_model_rejects_bad_treatment(t, msg):
    with pytest.raises(ValueError, match=msg):
        fit_effect_model(SPECS["two_model"], np.zeros((10, 2)), t, np.zeros(10))


def test_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        fit_effect_model(SPECS["two_model"], np.zeros((10, 2)), np.zeros(9), np.zeros(10))


def _gated(n=1500, seed=5, eps=0.05):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    t = (rng.random(n) < 1 / (1 + np.exp(-3 * X[:, 0]))).astype(float)
    y = X[:, 1] + t * (1 + X[:, 2]) + rng.normal(0, 0.3, n)
    raw = LevelDataset(2, X, t, y, np.arange(n))
    return overlap_subset(raw, fit_propensity(raw, trim_eps=eps))


def test_predict_cate_is_nan_outside_gate():
    data = _gated()
    model = fit_cate(SPECS["two_model"], data)
    probe = np.array([[0.0, 0, 0], [8.0, 0, 0], [-8.0, 0, 0]])
    out = model.predict_cate(probe)
    assert np.isfinite(out[0]) and np.isnan(out[1]) and np.isnan(out[2])
    np.testing.assert_array_equal(model.defined(probe), [True, False, False])
    assert model.metadata()["level"] == 2


def test_fit_cate_rejects_small_or_ungated_data():
    data = _gated()
    with pytest.raises(ValueError, match="at least"):
        fit_cate(SPECS["two_model"], data.subset(np.arange(data.n) < 30))
    with pytest.raises(ValueError, match="empty"):
        fit_cate(SPECS["two_model"], data.subset(np.zeros(data.n, dtype=bool)))
    raw = LevelDataset(2, data.X, data.treatment, data.y, data.rows)
    with pytest.raises(ValueError, match="propensity"):
        fit_cate(SPECS["two_model"], raw)


def test_predict_cate_dimension_mismatch():
    model = fit_cate(SPECS["direct"], _gated())
    with pytest.raises(ValueError, match="dimension"):
        model.predict_cate(np.zeros((1, 5)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 500), st.integers(2, 6), st.integers(5, 60))
def test_cross_fit_folds_stratified(seed, k, n1):
    t = np.r_[np.zeros(80), np.ones(n1)]
    folds = cross_fit_folds(t, k, seed)
    for arm in (0, 1):
        counts = np.bincount(folds[t == arm], minlength=k)
        assert counts.max() - counts.min() <= 1


def test_r_objective_minimised_at_true_effect():
    rng = np.random.default_rng(6)
    n = 5000
    g = np.full(n, 0.5)
    t = (rng.random(n) < g).astype(float)
    m = np.zeros(n)
    y = m + (t - g) * 2.0 + rng.normal(0, 0.1, n)
    losses = {tau: r_objective(y, t, m, g, tau) for tau in (1.0, 2.0, 3.0)}
    assert min(losses, key=losses.get) == 2.0


@pytest.mark.parametrize("kw, msg", [
    (dict(method="lasso"), "unknown method"),
    (dict(method="r_learner", cross_fit_folds=1), "cross_fit"),
    (dict(method="causal_forest_dml", subsample=0), "subsample"),
    (dict(method="causal_forest_dml", effect=LearnerSpec.linear()), "forest"),
])
def test_spec_validation(kw, msg):
    with pytest.raises(ValueError, match=msg):
        CateMethodSpec(**kw)


@pytest.mark.parametrize("spec", default_candidates(3), ids=lambda s: s.name)
def test_spec_round_trip(spec):
    assert CateMethodSpec.from_dict(spec.to_dict()) == spec


def test_default_candidates_cover_the_method_families():
    cands = default_candidates()
    assert len(cands) >= 6
    assert len({c.name for c in cands}) == len(cands)
    assert {c.method for c in cands} == set(METHODS)
