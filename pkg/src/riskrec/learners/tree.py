"""Exact-split regression and effect trees."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernel


def presort(X: np.ndarray) -> np.ndarray:
    """Row ids sorted per feature, shape (d, n)."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)


def _restrict(S: np.ndarray, active: np.ndarray) -> np.ndarray:
    keep = active[S]
    return np.ascontiguousarray(S[keep].reshape(S.shape[0], -1))


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    weight: np.ndarray
    n_features: int

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.left < 0))

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.left), dtype=int)
        for node in range(len(self.left)):
            if self.left[node] >= 0:
                depth[self.left[node]] = depth[node] + 1
                depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = _check_X(X, self.n_features)
        return _kernel.apply(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def with_values(self, value: np.ndarray) -> "Tree":
        return Tree(self.feature, self.threshold, self.left, self.right,
                    np.asarray(value, dtype=float), self.weight, self.n_features)


def _check_X(X, n_features: int) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"features must be a 2-D matrix, got shape {X.shape}")
    if X.shape[1] != n_features:
        raise ValueError(
            f"feature dimension mismatch: model trained on {n_features}, got {X.shape[1]}")
    return X


def _n_try(n_features: int, feature_frac: float) -> int:
    return max(1, min(n_features, int(round(feature_frac * n_features))))


def _grow(X, y, stats, counts, S, mode, max_depth, min_leaf, feature_frac, seed):
    active = counts.sum(axis=1) > 0
    if not active.all():
        S = _restrict(S, active)
    else:
        S = S.copy()
    out = _kernel.grow(np.ascontiguousarray(X.T), y, stats, counts, S, mode,
                       int(max_depth), float(min_leaf),
                       _n_try(X.shape[1], feature_frac), int(seed) % (2**32))
    return Tree(*out, n_features=X.shape[1])


def grow_regression_tree(X, y, *, sample_weight=None, multiplicity=None,
                         max_depth=6, min_leaf=1, feature_frac=1.0, seed=0,
                         sorted_idx=None) -> Tree:
    """Variance-reduction tree over every midpoint of sorted unique values.

    Ties in split gain go to the lowest feature index, then the lowest
    threshold. ``multiplicity`` carries bootstrap counts; rows with zero
    multiplicity are ignored.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    n = len(y)
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    m = np.ones(n) if multiplicity is None else np.asarray(multiplicity, dtype=float)
    wm = w * m
    stats = np.zeros((n, 4))
    stats[:, 0] = wm
    stats[:, 1] = wm * y
    stats[:, 2] = wm * y * y
    counts = np.zeros((n, 2))
    counts[:, 1] = m
    S = presort(X) if sorted_idx is None else sorted_idx
    return _grow(X, y, stats, counts, S, _kernel.MODE_REGRESSION, max_depth,
                 min_leaf, feature_frac, seed)


def grow_effect_tree(X, y, treatment, *, mode="diff", numerator=None, denominator=None,
                     multiplicity=None, max_depth=4, min_leaf=10, feature_frac=1.0,
                     seed=0, sorted_idx=None) -> Tree:
    """Tree whose leaves estimate a treatment effect.

    ``mode="diff"`` stores treated-minus-control outcome means per leaf.
    ``mode="ratio"`` stores sum(numerator)/sum(denominator), which with
    numerator = T_res * Y_res and denominator = T_res**2 is the leaf-wise
    residual-on-residual slope. Splits maximise
    n_L*n_R/(n_L+n_R) * (effect_L - effect_R)**2 and every child keeps at
    least ``min_leaf`` treated and ``min_leaf`` control rows.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    t = np.asarray(treatment, dtype=float)
    n = len(y)
    m = np.ones(n) if multiplicity is None else np.asarray(multiplicity, dtype=float)
    stats = np.zeros((n, 4))
    if mode == "diff":
        stats[:, 0] = m * y * t
        stats[:, 1] = m * t
        stats[:, 2] = m * y * (1 - t)
        stats[:, 3] = m * (1 - t)
        kmode = _kernel.MODE_DIFF
    elif mode == "ratio":
        stats[:, 0] = m * np.asarray(numerator, dtype=float)
        stats[:, 1] = m * np.asarray(denominator, dtype=float)
        kmode = _kernel.MODE_RATIO
    else:
        raise ValueError(f"unknown effect-tree mode {mode!r}")
    counts = np.column_stack([m * (1 - t), m * t])
    S = presort(X) if sorted_idx is None else sorted_idx
    return _grow(X, y, stats, counts, S, kmode, max_depth, min_leaf, feature_frac, seed)
