"""Least-squares, ridge and logistic models."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .tree import _check_X


def _weights(sample_weight, n: int) -> np.ndarray:
    if sample_weight is None:
        return np.ones(n)
    w = np.asarray(sample_weight, dtype=float)
    if w.shape != (n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("sample_weight must be a finite non-negative vector, one per row")
    if w.sum() <= 0:
        raise ValueError("sample_weight sums to zero")
    return w


def _standardizer(X: np.ndarray, w: np.ndarray):
    mean = np.average(X, axis=0, weights=w)
    std = np.sqrt(np.average((X - mean) ** 2, axis=0, weights=w))
    std[std < 1e-12] = 1.0
    return mean, std


class LinearRegressor:
    """Ordinary (optionally weighted) least squares with an intercept."""

    def __init__(self, coef: np.ndarray, intercept: float):
        self.coef_ = coef
        self.intercept_ = intercept
        self.n_features = len(coef)

    @classmethod
    def fit(cls, X, y, sample_weight=None) -> "LinearRegressor":
        n = len(y)
        sw = np.sqrt(_weights(sample_weight, n))
        A = np.column_stack([np.ones(n), X]) * sw[:, None]
        sol, *_ = np.linalg.lstsq(A, y * sw, rcond=None)
        return cls(sol[1:], float(sol[0]))

    def predict(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        return X @ self.coef_ + self.intercept_


class RidgeRegressor:
    """L2-penalised least squares on standardised features.

    The penalty ``alpha * ||b||^2`` acts on standardised coefficients and
    leaves the intercept free, so as ``alpha`` grows predictions shrink to the
    (weighted) target mean.
    """

    def __init__(self, coef, intercept, mean, std):
        self.coef_ = coef
        self.intercept_ = intercept
        self._mean = mean
        self._std = std
        self.n_features = len(coef)

    @classmethod
    def fit(cls, X, y, alpha: float = 1.0, sample_weight=None) -> "RidgeRegressor":
        w = _weights(sample_weight, len(y))
        mean, std = _standardizer(X, w)
        Z = (X - mean) / std
        ybar = np.average(y, weights=w)
        G = Z.T @ (Z * w[:, None]) + alpha * np.eye(Z.shape[1])
        b = np.linalg.solve(G, Z.T @ (w * (y - ybar)))
        return cls(b, float(ybar), mean, std)

    def predict(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        return ((X - self._mean) / self._std) @ self.coef_ + self.intercept_


class LogisticClassifier:
    """L2-regularised logistic regression fitted by damped Newton steps.

    Stops once the gradient of the weight-normalised objective has infinity
    norm at most ``tol`` or after ``max_iter`` iterations.
    """

    def __init__(self, coef, intercept, mean, std, n_iter, converged):
        self.coef_ = coef
        self.intercept_ = intercept
        self._mean = mean
        self._std = std
        self.n_features = len(coef)
        self.n_iter_ = n_iter
        self.converged_ = converged

    @classmethod
    def fit(cls, X, y, alpha: float = 1.0, sample_weight=None, tol: float = 1e-8,
            max_iter: int = 500) -> "LogisticClassifier":
        y = np.asarray(y, dtype=float)
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("logistic targets must be 0/1")
        w = _weights(sample_weight, len(y))
        if w[y == 1].sum() == 0 or w[y == 0].sum() == 0:
            raise ValueError("logistic fit needs both classes present")
        mean, std = _standardizer(X, w)
        Z = np.column_stack([np.ones(len(y)), (X - mean) / std])
        W = w.sum()
        pen = np.full(Z.shape[1], alpha / W)
        pen[0] = 0.0
        p0 = np.clip(np.average(y, weights=w), 1e-6, 1 - 1e-6)
        beta = np.zeros(Z.shape[1])
        beta[0] = np.log(p0 / (1 - p0))

        def objective(b):
            eta = Z @ b
            ll = np.logaddexp(0.0, eta) - y * eta
            return np.dot(w, ll) / W + 0.5 * np.dot(pen * b, b)

        obj = objective(beta)
        converged = False
        it = 0
        for it in range(1, max_iter + 1):
            p = expit(Z @ beta)
            grad = Z.T @ (w * (p - y)) / W + pen * beta
            if np.max(np.abs(grad)) <= tol:
                converged = True
                break
            H = Z.T @ (Z * (w * p * (1 - p))[:, None]) / W + np.diag(pen)
            H[np.diag_indices_from(H)] += 1e-12
            step = np.linalg.solve(H, grad)
            t = 1.0
            while True:
                cand = beta - t * step
                new = objective(cand)
                if new <= obj or t < 1e-10:
                    break
                t *= 0.5
            beta, obj = cand, new
        return cls(beta[1:], float(beta[0]), mean, std, it, converged)

    def decision_function(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        return ((X - self._mean) / self._std) @ self.coef_ + self.intercept_

    def predict(self, X) -> np.ndarray:
        return expit(self.decision_function(X))
