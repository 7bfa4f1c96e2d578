"""Credit-risk arithmetic: expected profit, exposure at default, CCF."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

DEFAULT_LGD = 0.75


class DomainError(ValueError):
    """An input lies outside the domain of a credit-risk formula."""


@dataclass(frozen=True)
class ProfitParams:
    lgd: float = DEFAULT_LGD
    ccf: float = 0.5

    def __post_init__(self):
        _fraction("lgd", self.lgd)
        _fraction("ccf", self.ccf)


def _fraction(name, value):
    arr = np.asarray(value, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise DomainError(f"{name} must lie in [0, 1], got {value}")


def _nonneg(name, value):
    arr = np.asarray(value, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError(f"{name} must be non-negative, got {value}")


def expected_profit(interest, balance, pd, lgd, ead):
    """Expected revenue minus provisions for one month.

    ``interest * balance * (1 - pd) - pd * lgd * ead``. Works elementwise on
    arrays as well as scalars.

    Raises:
        DomainError: if pd or lgd leave [0, 1] or balance/ead are negative.
    """
    _fraction("pd", pd)
    _fraction("lgd", lgd)
    _nonneg("balance", balance)
    _nonneg("ead", ead)
    out = (np.asarray(interest, dtype=float) * np.asarray(balance, dtype=float)
           * (1.0 - np.asarray(pd, dtype=float))
           - np.asarray(pd, dtype=float) * np.asarray(lgd, dtype=float)
           * np.asarray(ead, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def exposure_at_default(balance, limit, ccf):
    """Balance plus the CCF share of the undrawn limit; lies in [balance, limit]."""
    _nonneg("balance", balance)
    _fraction("ccf", ccf)
    b = np.asarray(balance, dtype=float)
    lim = np.asarray(limit, dtype=float)
    if np.any(b > lim):
        raise DomainError(f"balance exceeds limit: balance={balance}, limit={limit}")
    out = b + np.asarray(ccf, dtype=float) * (lim - b)
    return float(out) if np.ndim(out) == 0 else out


def ccf_ratios(defaulters: Iterable[tuple[float, float, float]]) -> np.ndarray:
    """Per-record drawdown ratios clipped to [0, 1].

    Records with no headroom (``limit_ref == balance_ref``) have no defined
    ratio and are dropped.
    """
    rows = np.asarray(list(defaulters), dtype=float).reshape(-1, 3)
    bal_ref, lim_ref, bal_def = rows.T
    usable = lim_ref > bal_ref
    ratio = (bal_def[usable] - bal_ref[usable]) / (lim_ref[usable] - bal_ref[usable])
    return np.clip(ratio, 0.0, 1.0)


def estimate_ccf(defaulters: Iterable[tuple[float, float, float]]) -> float:
    """Median clipped drawdown ratio over defaulters with headroom.

    Each record is ``(balance_ref, limit_ref, balance_at_default)``.
    """
    ratios = ccf_ratios(defaulters)
    if ratios.size == 0:
        raise ValueError(
            "no defaulter with limit_ref > balance_ref; cannot estimate CCF, "
            "configure a fallback value (e.g. --ccf / config key 'ccf') instead")
    return float(np.median(ratios))
