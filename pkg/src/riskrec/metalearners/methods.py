"""The six effect estimators. Each ``fit`` takes (spec, X, t, y, seed)."""

from __future__ import annotations

import numpy as np

from ..learners import fit_classifier, fit_regressor, grow_effect_tree, presort
from ..learners.ensemble import tree_seed
from ..learners.tree import _check_X

PROPENSITY_CLIP = (0.01, 0.99)


def role_seed(seed: int, role: int) -> int:
    """Independent integer seed for internal model ``role`` of a fit."""
    return int(np.random.default_rng([int(seed) % (2**63), 7919, role]).integers(2**31))


def cross_fit_folds(treatment, n_folds: int, seed: int) -> np.ndarray:
    """Fold id per row, stratified by arm so every fold mixes both arms."""
    t = np.asarray(treatment)
    rng = np.random.default_rng([int(seed) % (2**63), 104729])
    folds = np.empty(len(t), dtype=int)
    offset = 0
    for arm in (0, 1):
        idx = np.flatnonzero(t == arm)
        idx = idx[rng.permutation(len(idx))]
        folds[idx] = (np.arange(len(idx)) + offset) % n_folds
        offset += len(idx)
    return folds


def _fit_propensity(spec, X, t, seed):
    return fit_classifier(spec.propensity.with_seed(seed), X, t)


def cross_fit_nuisances(spec, X, t, y, seed):
    """Out-of-fold m(x) = E[Y|x] and clipped g(x) = P(T=1|x)."""
    folds = cross_fit_folds(t, spec.cross_fit_folds, seed)
    m_hat = np.empty(len(y))
    g_hat = np.empty(len(y))
    for k in range(spec.cross_fit_folds):
        test = folds == k
        if not test.any():
            continue
        train = ~test
        m = fit_regressor(spec.outcome.with_seed(role_seed(seed, 10 + k)), X[train], y[train])
        g = _fit_propensity(spec, X[train], t[train], role_seed(seed, 20 + k))
        m_hat[test] = m.predict(X[test])
        g_hat[test] = g.predict(X[test])
    return m_hat, np.clip(g_hat, *PROPENSITY_CLIP)


class _Estimator:
    n_features: int

    def _X(self, X) -> np.ndarray:
        return _check_X(np.atleast_2d(np.asarray(X, dtype=float)), self.n_features)


class DirectModel(_Estimator):
    """One outcome model over (x, T); the effect is f(x, 1) - f(x, 0).

    Linear families also get T*x columns, otherwise a linear model could
    only express a constant effect.
    """

    def __init__(self, model, interactions: bool, n_features: int):
        self.model = model
        self.interactions = interactions
        self.n_features = n_features

    @staticmethod
    def design(X, t, interactions: bool) -> np.ndarray:
        t = np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],))
        cols = [X, t[:, None]]
        if interactions:
            cols.append(X * t[:, None])
        return np.hstack(cols)

    @classmethod
    def fit(cls, spec, X, t, y, seed):
        inter = spec.outcome.kind in ("linear", "ridge")
        model = fit_regressor(spec.outcome.with_seed(role_seed(seed, 0)),
                              cls.design(X, t, inter), y)
        return cls(model, inter, X.shape[1])

    def effect(self, X) -> np.ndarray:
        X = self._X(X)
        return (self.model.predict(self.design(X, 1.0, self.interactions))
                - self.model.predict(self.design(X, 0.0, self.interactions)))


class TwoModel(_Estimator):
    """Separate outcome models per arm; effect mu_1(x) - mu_0(x)."""

    def __init__(self, mu0, mu1, n_features: int):
        self.mu0, self.mu1 = mu0, mu1
        self.n_features = n_features

    @classmethod
    def fit(cls, spec, X, t, y, seed):
        c, tr = t == 0, t == 1
        mu0 = fit_regressor(spec.outcome.with_seed(role_seed(seed, 0)), X[c], y[c])
        mu1 = fit_regressor(spec.outcome.with_seed(role_seed(seed, 1)), X[tr], y[tr])
        return cls(mu0, mu1, X.shape[1])

    def effect(self, X) -> np.ndarray:
        X = self._X(X)
        return self.mu1.predict(X) - self.mu0.predict(X)


class CausalTree(_Estimator):
    """A single tree splitting on the treated-minus-control mean difference."""

    def __init__(self, tree):
        self.tree = tree
        self.n_features = tree.n_features

    @classmethod
    def fit(cls, spec, X, t, y, seed):
        tree = grow_effect_tree(X, y, t, mode="diff", max_depth=spec.effect.max_depth,
                                min_leaf=spec.effect.min_leaf, seed=role_seed(seed, 0))
        return cls(tree)

    def effect(self, X) -> np.ndarray:
        return self.tree.predict(self._X(X))


class XLearner(_Estimator):
    """Imputed-effect regressions blended by the propensity.

    tau(x) = g(x) * tau_0(x) + (1 - g(x)) * tau_1(x), where tau_1 is fit on
    treated rows to y - mu_0(x) and tau_0 on control rows to mu_1(x) - y.
    Any component can be swapped (e.g. a constant g) through the
    constructor.
    """

    def __init__(self, mu0, mu1, tau0, tau1, g, n_features: int):
        self.mu0, self.mu1 = mu0, mu1
        self.tau0, self.tau1 = tau0, tau1
        self.g = g
        self.n_features = n_features

    @classmethod
    def fit(cls, spec, X, t, y, seed):
        c, tr = t == 0, t == 1
        mu0 = fit_regressor(spec.outcome.with_seed(role_seed(seed, 0)), X[c], y[c])
        mu1 = fit_regressor(spec.outcome.with_seed(role_seed(seed, 1)), X[tr], y[tr])
        d1 = y[tr] - mu0.predict(X[tr])
        d0 = mu1.predict(X[c]) - y[c]
        tau1 = fit_regressor(spec.effect.with_seed(role_seed(seed, 2)), X[tr], d1)
        tau0 = fit_regressor(spec.effect.with_seed(role_seed(seed, 3)), X[c], d0)
        g = _fit_propensity(spec, X, t, role_seed(seed, 4))
        return cls(mu0, mu1, tau0, tau1, g, X.shape[1])

    def with_propensity(self, g) -> "XLearner":
        return XLearner(self.mu0, self.mu1, self.tau0, self.tau1, g, self.n_features)

    def effect(self, X) -> np.ndarray:
        X = self._X(X)
        g = np.clip(self.g.predict(X), 0.0, 1.0)
        return g * self.tau0.predict(X) + (1.0 - g) * self.tau1.predict(X)


def r_objective(y, t, m_hat, g_hat, tau) -> float:
    """Mean of ((y - m) - (t - g) * tau)**2 on the given rows."""
    return float(np.mean(((y - m_hat) - (t - g_hat) * tau) ** 2))


class RLearner(_Estimator):
    """Residual-on-residual learner.

    With cross-fitted m and g, minimising sum ((y - m) - (t - g) tau(x))**2
    equals a regression of (y - m)/(t - g) on x with weights (t - g)**2.
    """

    def __init__(self, final, m_hat, g_hat, n_features: int):
        self.final = final
        self.m_hat = m_hat
        self.g_hat = g_hat
        self.n_features = n_features

    @classmethod
    def fit(cls, spec, X, t, y, seed):
        m_hat, g_hat = cross_fit_nuisances(spec, X, t, y, seed)
        resid_t = t - g_hat
        pseudo = (y - m_hat) / resid_t
        final = fit_regressor(spec.effect.with_seed(role_seed(seed, 5)), X, pseudo,
                              sample_weight=resid_t ** 2)
        return cls(final, m_hat, g_hat, X.shape[1])

    def effect(self, X) -> np.ndarray:
        return self.final.predict(self._X(X))


class CausalForestDML(_Estimator):
    """Cross-fitted residualisation followed by a forest of effect trees.

    Each tree is grown on a subsample drawn without replacement; its leaves
    hold the local residual slope sum(T~ Y~) / sum(T~^2) and splits
    maximise the heterogeneity of that slope.
    """

    def __init__(self, trees, m_hat, g_hat, n_features: int):
        self.trees = trees
        self.m_hat = m_hat
        self.g_hat = g_hat
        self.n_features = n_features

    @classmethod
    def fit(cls, spec, X, t, y, seed):
        m_hat, g_hat = cross_fit_nuisances(spec, X, t, y, seed)
        ry, rt = y - m_hat, t - g_hat
        n = len(y)
        size = max(2, int(round(spec.subsample * n)))
        forest = spec.effect
        S = presort(X)
        trees = []
        for b in range(forest.n_trees):
            rng = tree_seed(role_seed(seed, 6), b)
            mult = np.zeros(n)
            mult[rng.choice(n, size=size, replace=False)] = 1.0
            trees.append(grow_effect_tree(
                X, ry, t, mode="ratio", numerator=rt * ry, denominator=rt ** 2,
                multiplicity=mult, max_depth=forest.max_depth, min_leaf=forest.min_leaf,
                feature_frac=forest.feature_frac, seed=int(rng.integers(2**32)),
                sorted_idx=S))
        return cls(trees, m_hat, g_hat, X.shape[1])

    def effect(self, X) -> np.ndarray:
        X = self._X(X)
        out = np.zeros(X.shape[0])
        for tree in self.trees:
            out += tree.predict(X)
        return out / len(self.trees)
