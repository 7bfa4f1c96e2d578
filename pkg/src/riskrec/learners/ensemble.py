"""Single trees, bagged forests and gradient boosting on the shared kernel."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .linear import _weights
from .tree import Tree, _check_X, grow_regression_tree, presort


def tree_seed(seed: int, index: int) -> np.random.Generator:
    """Per-tree generator; tree ``index`` of a model seeded ``seed``."""
    return np.random.default_rng([int(seed) % (2**63), int(index)])


class TreeRegressor:
    def __init__(self, tree: Tree):
        self.tree = tree
        self.n_features = tree.n_features

    @classmethod
    def fit(cls, X, y, *, max_depth=6, min_leaf=1, seed=0, sample_weight=None):
        w = _weights(sample_weight, len(y))
        return cls(grow_regression_tree(X, y, sample_weight=w, max_depth=max_depth,
                                        min_leaf=min_leaf, seed=seed))

    def predict(self, X) -> np.ndarray:
        return self.tree.predict(X)


class ForestRegressor:
    """Bagged variance-reduction trees with per-node feature subsampling.

    Bootstrap resamples (size n, with replacement) enter the trees as row
    multiplicities, so the presorted index is shared across trees.
    """

    def __init__(self, trees: list[Tree]):
        self.trees = trees
        self.n_features = trees[0].n_features

    @classmethod
    def fit(cls, X, y, *, n_trees=50, max_depth=6, min_leaf=5, feature_frac=1 / 3,
            bootstrap=True, seed=0, sample_weight=None) -> "ForestRegressor":
        X = np.ascontiguousarray(X, dtype=float)
        n = len(y)
        w = _weights(sample_weight, n)
        S = presort(X)
        trees = []
        for t in range(n_trees):
            rng = tree_seed(seed, t)
            mult = np.bincount(rng.integers(0, n, n), minlength=n).astype(float) \
                if bootstrap else None
            trees.append(grow_regression_tree(
                X, y, sample_weight=w, multiplicity=mult, max_depth=max_depth,
                min_leaf=min_leaf, feature_frac=feature_frac,
                seed=int(rng.integers(2**32)), sorted_idx=S))
        return cls(trees)

    def predict(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        out = np.zeros(X.shape[0])
        for tree in self.trees:
            out += tree.predict(X)
        return out / len(self.trees)


class GBMRegressor:
    """Least-squares gradient boosting. ``train_loss_`` holds the weighted
    training MSE after initialisation and after every round."""

    def __init__(self, init, trees, learning_rate, train_loss, n_features):
        self.init_ = init
        self.trees = trees
        self.learning_rate = learning_rate
        self.train_loss_ = train_loss
        self.n_features = n_features

    @classmethod
    def fit(cls, X, y, *, n_rounds=100, learning_rate=0.1, max_depth=3, min_leaf=10,
            seed=0, sample_weight=None) -> "GBMRegressor":
        X = np.ascontiguousarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        w = _weights(sample_weight, len(y))
        S = presort(X)
        init = float(np.average(y, weights=w))
        F = np.full(len(y), init)
        losses = [float(np.average((y - F) ** 2, weights=w))]
        trees = []
        for r in range(n_rounds):
            tree = grow_regression_tree(X, y - F, sample_weight=w, max_depth=max_depth,
                                        min_leaf=min_leaf, seed=seed + r, sorted_idx=S)
            F = F + learning_rate * tree.predict(X)
            trees.append(tree)
            losses.append(float(np.average((y - F) ** 2, weights=w)))
        return cls(init, trees, learning_rate, losses, X.shape[1])

    def predict(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        out = np.full(X.shape[0], self.init_)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out


class GBMClassifier:
    """Logistic-loss boosting with one Newton step per leaf."""

    def __init__(self, init, trees, learning_rate, n_features):
        self.init_ = init
        self.trees = trees
        self.learning_rate = learning_rate
        self.n_features = n_features

    @classmethod
    def fit(cls, X, y, *, n_rounds=100, learning_rate=0.1, max_depth=3, min_leaf=10,
            seed=0, sample_weight=None) -> "GBMClassifier":
        X = np.ascontiguousarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        w = _weights(sample_weight, len(y))
        if w[y == 1].sum() == 0 or w[y == 0].sum() == 0:
            raise ValueError("classifier fit needs both classes present")
        S = presort(X)
        p0 = np.clip(np.average(y, weights=w), 1e-6, 1 - 1e-6)
        init = float(np.log(p0 / (1 - p0)))
        F = np.full(len(y), init)
        trees = []
        for r in range(n_rounds):
            p = expit(F)
            resid = y - p
            tree = grow_regression_tree(X, resid, sample_weight=w, max_depth=max_depth,
                                        min_leaf=min_leaf, seed=seed + r, sorted_idx=S)
            leaf = tree.apply(X)
            num = np.bincount(leaf, weights=w * resid, minlength=len(tree.value))
            den = np.bincount(leaf, weights=w * p * (1 - p), minlength=len(tree.value))
            value = np.clip(num / np.maximum(den, 1e-12), -4.0, 4.0)
            tree = tree.with_values(value)
            F = F + learning_rate * value[leaf]
            trees.append(tree)
        return cls(init, trees, learning_rate, X.shape[1])

    def decision_function(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        out = np.full(X.shape[0], self.init_)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out

    def predict(self, X) -> np.ndarray:
        return expit(self.decision_function(X))
