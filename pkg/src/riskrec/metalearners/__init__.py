"""Conditional treatment-effect estimators for one (level vs control) contrast.

:func:`fit_effect_model` fits any of the six methods on raw arrays and
returns an object with ``effect(X)``. :func:`fit_cate` wraps that around an
:class:`~riskrec.treatments.OverlapDataset` and attaches the level's
propensity gate, so :meth:`CateModel.predict_cate` answers NaN ("not
defined") outside the overlap band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .methods import (
    CausalForestDML,
    CausalTree,
    DirectModel,
    RLearner,
    TwoModel,
    XLearner,
    cross_fit_folds,
)
from .spec import METHODS, CateMethodSpec, default_candidates

__all__ = [
    "METHODS",
    "CateMethodSpec",
    "CateModel",
    "default_candidates",
    "fit_cate",
    "fit_effect_model",
    "CausalForestDML",
    "CausalTree",
    "DirectModel",
    "RLearner",
    "TwoModel",
    "XLearner",
    "cross_fit_folds",
]

MIN_ROWS = 50

_FITTERS = {
    "direct": DirectModel.fit,
    "two_model": TwoModel.fit,
    "causal_tree": CausalTree.fit,
    "x_learner": XLearner.fit,
    "r_learner": RLearner.fit,
    "causal_forest_dml": CausalForestDML.fit,
}


def _check(X, t, y):
    X = np.asarray(X, dtype=float)
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(t) != X.shape[0] or len(y) != X.shape[0]:
        raise ValueError(f"shape mismatch: X {X.shape}, treatment {t.shape}, outcome {y.shape}")
    if not np.all((t == 0) | (t == 1)):
        raise ValueError("treatment indicator must be 0/1")
    if len(t) == 0 or t.min() == t.max():
        raise ValueError("effect estimation needs both treated and control rows")
    return X, t, y


def fit_effect_model(spec: CateMethodSpec, X, treatment, y, seed: int | None = None):
    """Fit ``spec`` on arrays; the result exposes ``effect(X)`` (ungated)."""
    X, t, y = _check(X, treatment, y)
    seed = spec.seed if seed is None else int(seed)
    return _FITTERS[spec.method](spec, X, t, y, seed)


@dataclass(frozen=True)
class CateModel:
    """Effect estimator for one level, paired with that level's propensity gate."""

    level: int
    spec: CateMethodSpec
    estimator: object
    gate: object
    n_train: int

    @property
    def n_features(self) -> int:
        return self.estimator.n_features

    def effect(self, X) -> np.ndarray:
        """Raw estimates, ignoring the overlap gate."""
        return self.estimator.effect(X)

    def defined(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"feature dimension mismatch: model trained on "
                             f"{self.n_features}, got {X.shape[1]}")
        return self.gate.in_overlap(X)

    def predict_cate(self, X) -> np.ndarray:
        """Estimated effect per row; NaN where the propensity leaves the band."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        ok = self.defined(X)
        out = np.full(X.shape[0], np.nan)
        if ok.any():
            out[ok] = self.estimator.effect(X[ok])
        return out

    def metadata(self) -> dict:
        return {"level": self.level, "n_train": self.n_train,
                "trim_eps": self.gate.trim_eps, **self.spec.to_dict()}


def fit_cate(spec: CateMethodSpec, data, seed: int | None = None) -> CateModel:
    """Fit ``spec`` on an overlap dataset and attach its propensity gate.

    Raises:
        ValueError: if the data is empty, has a single arm or fewer than 50 rows.
    """
    if data.n == 0:
        raise ValueError(f"level {data.level}: overlap set is empty")
    if data.n < MIN_ROWS:
        raise ValueError(f"level {data.level}: {data.n} rows, need at least {MIN_ROWS}")
    if getattr(data, "gate", None) is None:
        raise ValueError("dataset carries no propensity model; build it with overlap_subset")
    est = fit_effect_model(spec, data.X, data.treatment, data.y, seed=seed)
    return CateModel(level=data.level, spec=spec, estimator=est, gate=data.gate,
                     n_train=data.n)

