import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from riskrec.learners import LearnerSpec
from riskrec.policy import (
    CL_CVAR,
    CL_CVAR_FL,
    PREDICT_ONLY,
    ForwardModel,
    PolicyDecision,
    argmax_with_control,
    cvar_matrix,
    fit_forward_model,
    recommend_cl,
    recommend_cl_cvar,
    recommend_cl_cvar_batch,
    recommend_cl_cvar_fl,
    recommend_prediction_only,
    treated_fraction,
)
from riskrec.risk import cvar

DOSES = (1.1, 1.3, 1.5)
values = arrays(float, st.tuples(st.integers(1, 30), st.just(3)),
                elements=st.one_of(st.floats(-50, 50), st.just(np.nan)))


class Fixed:
    """Forward model stand-in returning a known value per dosage."""

    def __init__(self, table):
        self.table = table

    def predict(self, Z):
        return np.array([self.table[round(d, 6)] for d in Z[:, -1]])


def fm_from(table):
    return ForwardModel(Fixed(table), 1.0, 2.0, DOSES)


@pytest.mark.parametrize("row, level", [
    ([1.0, 3.0, 2.0], 2), ([-1.0, -2.0, -0.5], 0), ([0.0, 0.0, 0.0], 0),
    ([2.0, 2.0, 1.0], 1), ([np.nan, np.nan, 1.0], 3), ([np.nan] * 3, 0),
])
def test_argmax_with_control(row, level):
    assert argmax_with_control([row])[0] == level


@settings(max_examples=100, deadline=None)
@given(values)
def test_argmax_never_picks_undefined_or_negative(v):
    lv = argmax_with_control(v)
    for i, j in enumerate(lv):
        if j > 0:
            assert np.isfinite(v[i, j - 1]) and v[i, j - 1] > 0
            assert v[i, j - 1] >= np.nanmax(np.r_[v[i], 0.0])
        else:
            assert not np.any(v[i][np.isfinite(v[i])] > 0)


def test_worked_cvar_example():
    d = recommend_cl_cvar({1: np.array([-1.0, 2.0, 3.0, 4.0]), 2: np.array([0.5, 0.6, 0.7, 0.8])},
                          p=0.75, dosages=(1.1, 1.3), customer_id="c")
    assert d.level == 2 and d.dosage == 1.3 and d.criterion == CL_CVAR
    assert d.values == (-1.0, 0.5)


def test_cvar_with_undefined_level():
    d = recommend_cl_cvar({1: None, 2: np.array([1.0, 2.0])}, p=0.5, dosages=(1.1, 1.3))
    assert d.level == 2 and np.isnan(d.values[0])


def test_cvar_matrix_matches_scalar_cvar():
    rng = np.random.default_rng(0)
    ens = [rng.normal(size=(40, 5)), None, rng.normal(size=(40, 5))]
    ens[0][:, 2] = np.nan
    m = cvar_matrix(ens, 0.9)
    assert m.shape == (5, 3)
    assert np.isnan(m[:, 1]).all() and np.isnan(m[2, 0])
    assert m[0, 2] == cvar(ens[2][:, 0], 0.9)


def test_all_levels_undefined_gives_control_for_everyone():
    m = cvar_matrix([None, None], 0.9, m=3)
    assert m.shape == (3, 2) and np.isnan(m).all()
    ds = recommend_cl_cvar_batch(m, ["a", "b", "c"], (1.1, 1.3))
    assert [d.level for d in ds] == [0, 0, 0]


class Model:
    def __init__(self, vals):
        self.vals = np.asarray(vals, float)

    def predict_cate(self, X):
        return self.vals[: len(X)]


def test_recommend_cl():
    models = {1: Model([1.0, -1.0]), 3: Model([2.0, np.nan])}
    out = recommend_cl(models, np.zeros((2, 1)), ["a", "b"], DOSES)
    assert [d.level for d in out] == [3, 0]
    assert np.isnan(out[0].values[1])
    assert out[0].dosage == 1.5 and out[1].dosage == 0.0


def test_forward_filter_worked_examples():
    up = recommend_cl_cvar_batch([[1.0, 2.0, -1.0], [-1.0, -1.0, -1.0], [3.0, 0.0, 0.0]],
                                 ["a", "b", "c"], DOSES)
    fm = fm_from({1.1: 10.0, 1.3: 20.0, 1.5: 30.0})
    out = recommend_cl_cvar_fl(up, [15.0, 0.0, 10.0], fm, np.zeros((3, 1)))
    assert [d.level for d in out] == [2, 0, 0]  # 15 < 20 keeps; control stays; 10 >= 10 drops
    assert out[0].y_p_hat == 20.0 and out[1].y_p_hat is None
    assert all(d.criterion == CL_CVAR_FL for d in out)


def test_forward_filter_rejects_wrong_upstream():
    up = [PolicyDecision("a", "CL", 1, 1.1, (1.0, 0.0, 0.0))]
    with pytest.raises(ValueError, match="CL_CVAR"):
        recommend_cl_cvar_fl(up, [0.0], fm_from({1.1: 1.0}), np.zeros((1, 1)))


@settings(max_examples=100, deadline=None)
@given(values, st.lists(st.floats(-20, 20), min_size=30, max_size=30),
       st.tuples(st.floats(-20, 20), st.floats(-20, 20), st.floats(-20, 20)))
def test_forward_filter_containment(v, y_r, preds):
    ids = [str(i) for i in range(len(v))]
    up = recommend_cl_cvar_batch(v, ids, DOSES)
    out = recommend_cl_cvar_fl(up, y_r[: len(v)], fm_from(dict(zip(DOSES, preds))),
                               np.zeros((len(v), 1)))
    for a, b in zip(up, out):
        assert b.level in (0, a.level)
        assert a.id == b.id and a.values == b.values


def test_prediction_only_strict_and_masked():
    fm = fm_from({1.1: 5.0, 1.3: 9.0, 1.5: 7.0})
    out = recommend_prediction_only(fm, np.zeros((3, 1)), ["a", "b", "c"], [1.0, 9.0, 1.0],
                                    defined=[[True] * 3, [True] * 3, [True, False, True]])
    assert [d.level for d in out] == [2, 0, 3]
    assert out[1].y_p_hat == 9.0 and out[2].y_p_hat == 7.0
    assert out[0].criterion == PREDICT_ONLY


def test_decision_validation_and_row():
    with pytest.raises(ValueError, match="undefined"):
        PolicyDecision("a", CL_CVAR, 1, 1.1, (np.nan,))
    with pytest.raises(ValueError, match="outside"):
        PolicyDecision("a", CL_CVAR, 2, 1.1, (1.0,))
    with pytest.raises(ValueError, match="criterion"):
        PolicyDecision("a", "XX", 0, 0.0, (1.0,))
    d = PolicyDecision("a", CL_CVAR, 1, 1.1, (1.5, np.nan))
    assert json.loads(d.to_row()["value_per_level_json"]) == {"1": 1.5, "2": None}
    assert d.to_row()["y_r"] == ""
    assert treated_fraction([d, PolicyDecision("b", CL_CVAR, 0, 0.0, (1.0, 1.0))]) == 0.5
    assert treated_fraction([]) == 0.0


def test_forward_model_fit_and_quality():
    rng = np.random.default_rng(2)
    n = 3000
    X = rng.normal(size=(n, 2))
    levels = rng.integers(0, 4, n)
    dose = np.r_[0.0, DOSES][levels]
    y = 3 * X[:, 0] + 4 * dose + rng.normal(0, 0.5, n)
    fm = fit_forward_model(X, levels, y, DOSES, LearnerSpec.gbm(100, max_depth=3), seed=1)
    assert fm.ratio < 0.3
    preds = fm.predict_levels(X[:5])
    assert preds.shape == (5, 3)
    assert np.all(np.diff(preds, axis=1) >= -0.5)


def test_forward_model_constant_target_and_errors():
    fm = fit_forward_model(np.zeros((10, 1)), np.zeros(10, int), np.ones(10), DOSES)
    assert fm.ratio == 0.0
    np.testing.assert_array_equal(fm.predict_levels(np.zeros((2, 1))), 1.0)
    with pytest.raises(ValueError, match="non-empty"):
        fit_forward_model(np.zeros((0, 1)), [], [], DOSES)
    with pytest.raises(ValueError, match="dosage"):
        fit_forward_model(np.zeros((3, 1)), [0, 1, 2], [1.0, 2.0, 3.0], (1.1, np.nan))
