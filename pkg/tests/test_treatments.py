import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskrec.learners import LearnerSpec
from riskrec.treatments import (
    DosagePartition,
    assign_level,
    assign_levels,
    discretize,
    fit_propensity,
    in_overlap,
    level_dataset,
    overlap_subset,
)

CUTS = (1.2, 1.4, 1.6, 1.9, 2.2)


def test_discretize_levels_are_bin_means():
    d = [0.0, 1.1, 1.15, 1.3, 2.4, 2.45, 0.0]
    part = discretize(d, (1.2, 2.0))
    assert part.counts == (2, 1, 2)
    np.testing.assert_allclose(part.levels, [1.125, 1.3, 2.425])


def test_cut_point_belongs_to_lower_bin():
    part = discretize([1.2, 1.3], (1.2,))
    assert part.counts == (1, 1)
    assert assign_level(1.2, part) == 1
    assert assign_level(1.2000001, part) == 2


def test_empty_bin_is_flagged_not_dropped():
    part = discretize([1.1, 2.5], CUTS)
    assert part.k == 6
    assert part.defined == (True, False, False, False, False, True)
    assert np.isnan(part.levels[2])
    assert part.dosage(0) == 0.0


@pytest.mark.parametrize("d, cuts", [([], CUTS), ([-1.0, 1.5], CUTS), ([0.0, 0.0], CUTS),
                                     ([1.5], (1.4, 1.2)), ([1.5], (1.2, 1.2))])
def test_discretize_errors(d, cuts):
    with pytest.raises(ValueError):
        discretize(d, cuts)


def test_no_cuts_gives_single_level():
    part = discretize([0.0, 1.5, 2.5], ())
    assert part.k == 1 and part.levels == (2.0,)


def test_partition_json_round_trip():
    part = discretize([1.1, 2.5], CUTS)
    back = DosagePartition.from_dict(json.loads(part.to_json()))
    assert back.counts == part.counts and back.cut_points == part.cut_points
    np.testing.assert_array_equal(np.isnan(back.levels), np.isnan(part.levels))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 3.0), min_size=1, max_size=200),
       st.lists(st.floats(1.0, 2.5), min_size=0, max_size=6, unique=True))
def test_partition_properties(d, cuts):
    cuts = tuple(sorted(cuts))
    part = discretize(d, cuts)
    lv = assign_levels(np.asarray(d), part)
    assert sum(part.counts) == len(d)
    assert np.all((lv >= 1) & (lv <= part.k))
    # levels increase with dosage
    assert np.all(np.diff(lv[np.argsort(d, kind="stable")]) >= 0)
    defined = [b for b in part.levels if not np.isnan(b)]
    assert defined == sorted(defined)
    for j, b in enumerate(part.levels, start=1):
        if not np.isnan(b):
            lo = cuts[j - 2] if j > 1 else -np.inf
            hi = cuts[j - 1] if j <= len(cuts) else np.inf
            assert lo < b <= hi + 1e-12


@pytest.mark.parametrize("eps, g, expected", [
    (0.05, [0.05, 0.95, 0.049, 0.951, 0.5], [True, True, False, False, True]),
    (0.0, [0.0, 1.0, 1e-9, 0.3], [False, False, True, True]),
])
def test_in_overlap_band(eps, g, expected):
    np.testing.assert_array_equal(in_overlap(np.array(g), eps), expected)


def _confounded(n=2000, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    p = 1 / (1 + np.exp(-(2.5 * X[:, 0])))
    levels = np.where(rng.random(n) < p, 2, 0)
    levels[rng.random(n) < 0.2] = 1
    y = X[:, 1] + rng.normal(size=n)
    return X, levels, y


def test_level_dataset_keeps_control_and_level():
    X, levels, y = _confounded()
    data = level_dataset(X, levels, y, 2)
    assert set(levels[data.rows]) <= {0, 2}
    np.testing.assert_array_equal(data.treatment, levels[data.rows] == 2)


def test_overlap_subset_trims_extremes():
    X, levels, y = _confounded()
    data = level_dataset(X, levels, y, 2)
    model = fit_propensity(data, trim_eps=0.1)
    sub = overlap_subset(data, model)
    assert 0 < sub.n < data.n
    assert np.all((sub.propensity >= 0.1) & (sub.propensity <= 0.9))
    assert sub.has_both_arms()
    np.testing.assert_array_equal(model.in_overlap(sub.X), True)


def test_propensity_is_calibrated_on_average():
    X, levels, y = _confounded(4000)
    data = level_dataset(X, levels, y, 2)
    g = fit_propensity(data).predict(data.X)
    assert abs(g.mean() - data.treatment.mean()) < 0.01


def test_propensity_needs_both_classes():
    X, levels, y = _confounded()
    data = level_dataset(X, np.zeros_like(levels), y, 2)
    with pytest.raises(ValueError, match="both"):
        fit_propensity(data)


def test_propensity_bad_eps():
    X, levels, y = _confounded()
    with pytest.raises(ValueError):
        fit_propensity(level_dataset(X, levels, y, 2), trim_eps=0.5)


def test_overlap_subset_level_mismatch():
    X, levels, y = _confounded()
    model = fit_propensity(level_dataset(X, levels, y, 2))
    with pytest.raises(ValueError, match="level"):
        overlap_subset(level_dataset(X, levels, y, 1), model)


def test_gbm_propensity_in_unit_interval():
    X, levels, y = _confounded(600)
    model = fit_propensity(level_dataset(X, levels, y, 2),
                           LearnerSpec.gbm(n_rounds=20, max_depth=2))
    g = model.predict(X)
    assert np.all((g >= 0) & (g <= 1))
