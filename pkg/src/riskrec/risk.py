"""Bootstrap distributions of individual effects and their empirical VaR/CVaR.

Lower tail is the risky side: a negative effect is a loss. ``var`` returns
the ascending order statistic at position ceil((1 - p) * B) (1-indexed) and
``cvar`` the mean of every replicate at or below it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

DEFAULT_B = 200
DEFAULT_P = 0.95
MAX_RETRIES = 10


@dataclass(frozen=True)
class BootstrapDistribution:
    values: np.ndarray
    seed: int = 0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(vals)):
            raise ValueError("bootstrap values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def B(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class RiskSummary:
    p: float
    var_p: float
    cvar_p: float
    mean: float

    def to_dict(self) -> dict:
        return {"p": self.p, "var": self.var_p, "cvar": self.cvar_p, "mean": self.mean}


def _values(dist) -> np.ndarray:
    vals = dist.values if isinstance(dist, BootstrapDistribution) else np.asarray(dist, float)
    if vals.size == 0:
        raise ValueError("VaR/CVaR of an empty distribution is undefined")
    return vals


def _check_p(p: float) -> None:
    if not 0.0 < p < 1.0:
        raise ValueError(f"confidence level p must lie in (0, 1), got {p}")


def tail_index(p: float, B: int) -> int:
    """1-indexed order statistic used as VaR: ceil((1 - p) * B), at least 1.

    The product is rounded to 9 decimals first so that e.g. p = 0.95,
    B = 100 lands on 5 rather than on 6 through binary round-off.
    """
    _check_p(p)
    return max(1, math.ceil(round((1.0 - p) * B, 9)))


def var(dist, p: float = DEFAULT_P) -> float:
    vals = np.sort(_values(dist))
    return float(vals[tail_index(p, vals.size) - 1])


def _exact_mean(vals) -> float:
    # correctly rounded, independent of summation order
    return float(sum(map(Fraction, vals.tolist()), Fraction(0)) / len(vals))


def cvar(dist, p: float = DEFAULT_P) -> float:
    vals = _values(dist)
    threshold = var(vals, p)
    return _exact_mean(vals[vals <= threshold])


def summarize(dist, p: float = DEFAULT_P) -> RiskSummary:
    vals = _values(dist)
    return RiskSummary(p=p, var_p=var(vals, p), cvar_p=cvar(vals, p),
                       mean=_exact_mean(vals))


def replicate_rng(seed: int, replicate: int, attempt: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) % (2**63), int(replicate), int(attempt)])


def bootstrap_matrix(spec, data, X_eval, B: int = DEFAULT_B, seed: int = 0) -> np.ndarray:
    """Refit ``spec`` on B resamples of ``data`` and predict at every row of ``X_eval``.

    Returns a (B, m) matrix of raw effect predictions (no propensity gating;
    the caller is responsible for evaluating only gated-in points). A resample
    that loses one of the two arms is redrawn with the next attempt counter, up
    to ``MAX_RETRIES`` times.
    """
    from .metalearners import fit_effect_model

    if B < 1:
        raise ValueError("B must be >= 1")
    X_eval = np.atleast_2d(np.asarray(X_eval, dtype=float))
    n = data.n
    out = np.empty((B, X_eval.shape[0]))
    for b in range(B):
        for attempt in range(MAX_RETRIES + 1):
            idx = replicate_rng(seed, b, attempt).integers(0, n, n)
            t = data.treatment[idx]
            if t.min() != t.max():
                break
        else:
            raise RuntimeError(
                f"bootstrap replicate {b}: every resample after {MAX_RETRIES} retries "
                "contained a single treatment arm")
        model = fit_effect_model(spec, data.X[idx], t, data.y[idx],
                                 seed=int(replicate_rng(seed, b, attempt).integers(2**31)))
        out[b] = model.effect(X_eval)
    return out


def bootstrap_ite(spec, data, x, B: int = DEFAULT_B, seed: int = 0) -> BootstrapDistribution:
    """Bootstrap distribution of the effect estimate at a single point ``x``."""
    col = bootstrap_matrix(spec, data, np.asarray(x, dtype=float).reshape(1, -1), B, seed)
    return BootstrapDistribution(col[:, 0], seed=seed)
