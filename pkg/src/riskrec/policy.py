"""Decision rules mapping per-level effect estimates to a recommended level.

Every rule treats control (level 0) as worth exactly 0, skips levels whose
value is undefined (NaN), and breaks ties toward the smaller dosage. The
batch functions work on an (m, k) matrix of per-level values, one row per
customer; the single-customer wrappers mirror them for one row.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .learners import ConstantModel, LearnerSpec, fit_regressor, rmse
from .risk import DEFAULT_P, cvar

CL = "CL"
CL_CVAR = "CL_CVAR"
CL_CVAR_FL = "CL_CVAR_FL"
PREDICT_ONLY = "PREDICT_ONLY"
CRITERIA = (CL, CL_CVAR, CL_CVAR_FL, PREDICT_ONLY)

DECISION_COLUMNS = ("id", "criterion", "chosen_level", "chosen_dosage",
                    "value_per_level_json", "y_r", "y_p_hat")


@dataclass(frozen=True)
class PolicyDecision:
    """One customer's recommendation and the values that produced it.

    ``values`` holds one entry per level 1..k (NaN = undefined). ``y_r`` and
    ``y_p_hat`` are set for the forward-looking rules only.
    """

    id: str
    criterion: str
    level: int
    dosage: float
    values: tuple[float, ...]
    y_r: float | None = None
    y_p_hat: float | None = None

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if self.level < 0 or self.level > len(self.values):
            raise ValueError(f"level {self.level} outside 0..{len(self.values)}")
        if self.level > 0 and np.isnan(self.values[self.level - 1]):
            raise ValueError(f"level {self.level} is undefined for customer {self.id}")

    @property
    def treated(self) -> bool:
        return self.level > 0

    def values_json(self) -> str:
        return json.dumps({str(j + 1): (None if np.isnan(v) else float(v))
                           for j, v in enumerate(self.values)})

    def to_row(self) -> dict:
        return {"id": self.id, "criterion": self.criterion, "chosen_level": self.level,
                "chosen_dosage": self.dosage, "value_per_level_json": self.values_json(),
                "y_r": "" if self.y_r is None else self.y_r,
                "y_p_hat": "" if self.y_p_hat is None else self.y_p_hat}


def argmax_with_control(values) -> np.ndarray:
    """Row-wise best level with control fixed at 0.

    NaN entries are never chosen. ``argmax`` returns the first maximum, and
    columns run from control up the dosage ladder, so ties go to the
    smaller dosage (control wins any tie with a zero-valued level).
    """
    v = np.atleast_2d(np.asarray(values, dtype=float))
    full = np.hstack([np.zeros((v.shape[0], 1)), np.where(np.isnan(v), -np.inf, v)])
    return np.argmax(full, axis=1)


def _as_matrix(values, k=None) -> np.ndarray:
    if isinstance(values, Mapping):
        k = k or (max(values) if values else 0)
        row = np.full(k, np.nan)
        for level, val in values.items():
            if val is not None:
                row[int(level) - 1] = float(val)
        return row[None, :]
    return np.atleast_2d(np.asarray(values, dtype=float))


def _dosage(level: int, dosages) -> float:
    return 0.0 if level == 0 else float(dosages[level - 1])


def _decisions(ids, criterion, levels, values, dosages, y_r=None, y_p=None):
    out = []
    for i, cid in enumerate(ids):
        lv = int(levels[i])
        out.append(PolicyDecision(
            id=str(cid), criterion=criterion, level=lv, dosage=_dosage(lv, dosages),
            values=tuple(float(x) for x in values[i]),
            y_r=None if y_r is None else float(y_r[i]),
            y_p_hat=None if y_p is None else float(y_p[i])))
    return out


def cate_matrix(models: Mapping[int, object], X, k: int) -> np.ndarray:
    """(m, k) gated effect estimates; NaN for undefined or unmodelled levels."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.full((X.shape[0], k), np.nan)
    for level, model in models.items():
        if model is not None:
            out[:, level - 1] = model.predict_cate(X)
    return out


def recommend_cl(models: Mapping[int, object], X, ids: Sequence[str], dosages,
                 ) -> list[PolicyDecision]:
    """Highest estimated effect among defined levels, or control."""
    values = cate_matrix(models, X, len(dosages))
    return _decisions(ids, CL, argmax_with_control(values), values, dosages)


def cvar_matrix(ensembles, p: float = DEFAULT_P, m: int | None = None) -> np.ndarray:
    """(m, k) CVaRs from per-level (B, m) bootstrap matrices (None = undefined).

    ``ensembles[j]`` is the replicate matrix of level j+1; NaN columns mark
    customers outside that level's overlap gate. Pass ``m`` when every level
    may be undefined, otherwise it is read off the first matrix.
    """
    k = len(ensembles)
    if m is None:
        m = next((e.shape[1] for e in ensembles if e is not None), 0)
    out = np.full((m, k), np.nan)
    for j, ens in enumerate(ensembles):
        if ens is None:
            continue
        for i in range(m):
            col = ens[:, i]
            if not np.isnan(col).any():
                out[i, j] = cvar(col, p)
    return out


def recommend_cl_cvar_batch(cvars, ids, dosages) -> list[PolicyDecision]:
    cvars = np.atleast_2d(np.asarray(cvars, dtype=float))
    return _decisions(ids, CL_CVAR, argmax_with_control(cvars), cvars, dosages)


def recommend_cl_cvar(ensembles: Mapping[int, object], p: float = DEFAULT_P, dosages=None,
                      customer_id: str = "", k: int | None = None) -> PolicyDecision:
    """Highest CVaR among the levels with an ensemble, or control.

    ``ensembles`` maps level -> bootstrap distribution (or plain value
    array); levels without one are undefined.
    """
    cv = {level: cvar(dist, p) for level, dist in ensembles.items() if dist is not None}
    row = _as_matrix(cv, k or (max(ensembles) if ensembles else 0))
    dosages = dosages if dosages is not None else np.arange(1, row.shape[1] + 1, dtype=float)
    return recommend_cl_cvar_batch(row, [customer_id], dosages)[0]


@dataclass(frozen=True)
class ForwardModel:
    """Regressor of the post-decision outcome on pretreatment features plus dosage."""

    model: object
    rmse: float
    target_sd: float
    dosages: tuple[float, ...]

    @property
    def ratio(self) -> float:
        return self.rmse / self.target_sd if self.target_sd > 0 else 0.0

    @staticmethod
    def design(X, dosage) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        d = np.broadcast_to(np.asarray(dosage, dtype=float), (X.shape[0],))
        return np.hstack([X, d[:, None]])

    def predict(self, X, dosage) -> np.ndarray:
        return self.model.predict(self.design(X, dosage))

    def predict_levels(self, X) -> np.ndarray:
        """(m, k) predictions with every customer placed at each level's dosage."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.column_stack([self.predict(X, d) for d in self.dosages]) \
            if self.dosages else np.empty((X.shape[0], 0))


def default_forward_learner(seed: int = 0) -> LearnerSpec:
    return LearnerSpec.gbm(n_rounds=200, learning_rate=0.1, max_depth=4, min_leaf=20,
                           seed=seed)


def fit_forward_model(X, levels, y, dosages, learner: LearnerSpec | None = None,
                      holdout: float = 0.2, seed: int = 0) -> ForwardModel:
    """Fit Y on (x, level dosage) and report held-out rmse against SD(Y).

    The model is refit on all rows after the held-out score is taken.
    Control rows enter with dosage 0.

    Raises:
        ValueError: on an empty training set.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("forward model needs a non-empty training set")
    levels = np.asarray(levels, dtype=int)
    table = np.concatenate([[0.0], np.asarray(dosages, dtype=float)])
    dose = table[levels]
    if np.isnan(dose).any():
        raise ValueError("a training row is assigned to a level without a dosage")
    learner = (learner or default_forward_learner(seed)).with_seed(seed)
    Z = ForwardModel.design(X, dose)
    rng = np.random.default_rng([int(seed) % (2**63), 31337])
    test = np.zeros(len(y), dtype=bool)
    n_test = int(round(holdout * len(y)))
    if 0 < n_test < len(y) - 1:
        test[rng.permutation(len(y))[:n_test]] = True
    if y.min() == y.max():
        const = ConstantModel(float(y[0]), Z.shape[1])
        return ForwardModel(const, 0.0, 0.0, tuple(map(float, dosages)))
    if test.any():
        held = fit_regressor(learner, Z[~test], y[~test])
        err, sd = rmse(held, Z[test], y[test]), float(np.std(y[test]))
    else:
        err, sd = None, float(np.std(y))
    model = fit_regressor(learner, Z, y)
    if err is None:
        err = rmse(model, Z, y)
    return ForwardModel(model, err, sd, tuple(map(float, dosages)))


def recommend_cl_cvar_fl(upstream: Sequence[PolicyDecision], y_r, fm: ForwardModel, X,
                         ) -> list[PolicyDecision]:
    """Keep an upstream increase only if the forecast beats the current profit.

    Control stays control. For an increase, Y_P is forecast at the upstream
    level; if ``y_r >= Y_P`` the customer is downgraded to control,
    otherwise the upstream level is kept unchanged.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y_r = np.asarray(y_r, dtype=float)
    out = []
    for i, up in enumerate(upstream):
        if up.criterion != CL_CVAR:
            raise ValueError(f"upstream decision for {up.id} is {up.criterion}, need {CL_CVAR}")
        if up.level == 0:
            y_p, level = None, 0
        else:
            y_p = float(fm.predict(X[i:i + 1], up.dosage)[0])
            level = 0 if y_r[i] >= y_p else up.level
        out.append(PolicyDecision(id=up.id, criterion=CL_CVAR_FL, level=level,
                                  dosage=up.dosage if level else 0.0, values=up.values,
                                  y_r=float(y_r[i]), y_p_hat=y_p))
    return out


def recommend_prediction_only(fm: ForwardModel, X, ids, y_r, defined=None,
                              ) -> list[PolicyDecision]:
    """Level with the highest forecast, if that forecast strictly exceeds y_r.

    ``defined`` optionally masks (m, k) levels that may not be chosen, such
    as empty bins.
    """
    preds = fm.predict_levels(X)
    if defined is not None:
        preds = np.where(np.asarray(defined, dtype=bool), preds, np.nan)
    y_r = np.asarray(y_r, dtype=float)
    safe = np.where(np.isnan(preds), -np.inf, preds)
    best = np.argmax(safe, axis=1) if preds.shape[1] else np.zeros(len(y_r), dtype=int)
    top = safe[np.arange(len(best)), best] if preds.shape[1] else np.full(len(y_r), -np.inf)
    level = np.where(top > y_r, best + 1, 0)
    y_p = np.where(np.isfinite(top), top, np.nan)
    out = _decisions(ids, PREDICT_ONLY, level, preds, fm.dosages, y_r=y_r)
    return [PolicyDecision(d.id, d.criterion, d.level, d.dosage, d.values, d.y_r,
                           None if np.isnan(y_p[i]) else float(y_p[i]))
            for i, d in enumerate(out)]


def treated_fraction(decisions: Sequence[PolicyDecision]) -> float:
    if not decisions:
        return 0.0
    return sum(d.treated for d in decisions) / len(decisions)
