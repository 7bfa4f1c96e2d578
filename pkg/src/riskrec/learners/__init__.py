"""Base supervised learners used by every estimator in the package.

``LearnerSpec`` names a model family and its hyperparameters; :func:`fit`
turns a spec plus data into a fitted model exposing ``predict``. Classifiers
(``logistic`` always, and tree-based kinds through :func:`fit_classifier`)
return probabilities.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .ensemble import ForestRegressor, GBMClassifier, GBMRegressor, TreeRegressor
from .linear import LinearRegressor, LogisticClassifier, RidgeRegressor
from .tree import Tree, grow_effect_tree, grow_regression_tree, presort

__all__ = [
    "LearnerSpec",
    "ConstantModel",
    "fit",
    "fit_regressor",
    "fit_classifier",
    "rmse",
    "Tree",
    "grow_effect_tree",
    "grow_regression_tree",
    "presort",
]

KINDS = ("linear", "ridge", "logistic", "tree", "forest", "gbm")


@dataclass(frozen=True)
class LearnerSpec:
    kind: str
    alpha: float = 1.0
    max_depth: int = 6
    min_leaf: int = 5
    n_trees: int = 50
    feature_frac: float = 1 / 3
    bootstrap: bool = True
    n_rounds: int = 100
    learning_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("ridge", "logistic") and not self.alpha > 0:
            raise ValueError(f"{self.kind} penalty must be positive, got {self.alpha}")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.n_trees < 1 or self.n_rounds < 1:
            raise ValueError("n_trees and n_rounds must be >= 1")
        if not 0 < self.feature_frac <= 1:
            raise ValueError("feature_frac must lie in (0, 1]")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")

    @classmethod
    def linear(cls, seed: int = 0) -> "LearnerSpec":
        return cls("linear", seed=seed)

    @classmethod
    def ridge(cls, alpha: float = 1.0, seed: int = 0) -> "LearnerSpec":
        return cls("ridge", alpha=alpha, seed=seed)

    @classmethod
    def logistic(cls, alpha: float = 1.0, seed: int = 0) -> "LearnerSpec":
        return cls("logistic", alpha=alpha, seed=seed)

    @classmethod
    def tree(cls, max_depth: int = 6, min_leaf: int = 5, seed: int = 0) -> "LearnerSpec":
        return cls("tree", max_depth=max_depth, min_leaf=min_leaf, seed=seed)

    @classmethod
    def forest(cls, n_trees: int = 50, max_depth: int = 6, min_leaf: int = 5,
               feature_frac: float = 1 / 3, bootstrap: bool = True,
               seed: int = 0) -> "LearnerSpec":
        return cls("forest", n_trees=n_trees, max_depth=max_depth, min_leaf=min_leaf,
                   feature_frac=feature_frac, bootstrap=bootstrap, seed=seed)

    @classmethod
    def gbm(cls, n_rounds: int = 100, learning_rate: float = 0.1, max_depth: int = 3,
            min_leaf: int = 10, seed: int = 0) -> "LearnerSpec":
        return cls("gbm", n_rounds=n_rounds, learning_rate=learning_rate,
                   max_depth=max_depth, min_leaf=min_leaf, seed=seed)

    def with_seed(self, seed: int) -> "LearnerSpec":
        return LearnerSpec(**{**asdict(self), "seed": int(seed)})

    def to_dict(self) -> dict:
        """Only the hyperparameters that matter for this kind."""
        keep = {
            "linear": (),
            "ridge": ("alpha",),
            "logistic": ("alpha",),
            "tree": ("max_depth", "min_leaf"),
            "forest": ("n_trees", "max_depth", "min_leaf", "feature_frac", "bootstrap"),
            "gbm": ("n_rounds", "learning_rate", "max_depth", "min_leaf"),
        }[self.kind]
        out = {"kind": self.kind}
        out.update({k: getattr(self, k) for k in keep})
        out["seed"] = self.seed
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "LearnerSpec":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown learner fields: {sorted(unknown)}")
        return cls(**data)


class ConstantModel:
    """Predicts one value everywhere; useful as a fixed nuisance model."""

    def __init__(self, value: float, n_features: int):
        self.value = float(value)
        self.n_features = n_features

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"feature dimension mismatch: model trained on {self.n_features}, "
                f"got {X.shape[1] if X.ndim == 2 else X.shape}")
        return np.full(X.shape[0], self.value)


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"features must be a 2-D matrix, got shape {X.shape}")
    if y.ndim != 1 or len(y) != X.shape[0]:
        raise ValueError(f"{X.shape[0]} feature rows but {y.shape} targets")
    if len(y) < 2:
        raise ValueError("need at least 2 rows to fit")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("features and targets must be finite")
    return X, y


def fit_regressor(spec: LearnerSpec, X, y, sample_weight=None):
    X, y = _check_xy(X, y)
    k = spec.kind
    if k == "linear":
        return LinearRegressor.fit(X, y, sample_weight=sample_weight)
    if k == "ridge":
        return RidgeRegressor.fit(X, y, alpha=spec.alpha, sample_weight=sample_weight)
    if k == "tree":
        return TreeRegressor.fit(X, y, max_depth=spec.max_depth, min_leaf=spec.min_leaf,
                                 seed=spec.seed, sample_weight=sample_weight)
    if k == "forest":
        return ForestRegressor.fit(X, y, n_trees=spec.n_trees, max_depth=spec.max_depth,
                                   min_leaf=spec.min_leaf, feature_frac=spec.feature_frac,
                                   bootstrap=spec.bootstrap, seed=spec.seed,
                                   sample_weight=sample_weight)
    if k == "gbm":
        return GBMRegressor.fit(X, y, n_rounds=spec.n_rounds,
                                learning_rate=spec.learning_rate, max_depth=spec.max_depth,
                                min_leaf=spec.min_leaf, seed=spec.seed,
                                sample_weight=sample_weight)
    raise ValueError(f"{k!r} is not a regressor")


def fit_classifier(spec: LearnerSpec, X, y, sample_weight=None):
    X, y = _check_xy(X, y)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("classifier targets must be 0/1")
    if y.min() == y.max():
        raise ValueError("classifier fit needs both classes present, got a single class")
    k = spec.kind
    if k == "logistic":
        return LogisticClassifier.fit(X, y, alpha=spec.alpha, sample_weight=sample_weight)
    if k == "gbm":
        return GBMClassifier.fit(X, y, n_rounds=spec.n_rounds,
                                 learning_rate=spec.learning_rate, max_depth=spec.max_depth,
                                 min_leaf=spec.min_leaf, seed=spec.seed,
                                 sample_weight=sample_weight)
    if k in ("tree", "forest"):
        # leaf means of 0/1 labels are probabilities already
        return fit_regressor(spec, X, y, sample_weight=sample_weight)
    raise ValueError(f"{k!r} cannot be used as a classifier")


def fit(spec: LearnerSpec, X, y, sample_weight=None):
    """Fit ``spec``; logistic specs give a classifier, everything else a regressor."""
    if spec.kind == "logistic":
        return fit_classifier(spec, X, y, sample_weight=sample_weight)
    return fit_regressor(spec, X, y, sample_weight=sample_weight)


def rmse(model, X, y) -> float:
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("rmse of an empty set is undefined")
    resid = model.predict(X) - y
    return float(np.sqrt(np.mean(resid ** 2)))
