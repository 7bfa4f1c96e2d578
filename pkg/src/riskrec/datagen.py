"""Synthetic credit-card portfolios with known potential outcomes, plus CSV I/O.

A portfolio is a :class:`pandas.DataFrame` with the columns of
:data:`COLUMNS`; one row per cardholder. :func:`generate_portfolio` also
returns a ground-truth frame holding every potential outcome, so effect
estimates can be scored exactly.

Outcome model, per customer with features x and nominal level dose d_j::

    Y(0)   = ep_m3 + drift(x) + e
    Y(j)   = Y(0) + tau(x, j)

The noise draw e is shared across levels, so ``Y(j) - Y(0)`` is the effect
itself and the observed ``ep_m6`` is the potential outcome of the assigned
level, bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from scipy import stats
from scipy.special import expit, logit

from .finance import DEFAULT_LGD, expected_profit, exposure_at_default

COLUMNS = (
    "id", "bureau_score", "est_income", "interest_rate", "months_on_book",
    "limit_m3", "limit_m6", "avg_balance", "avg_consumption",
    "balance_m1", "balance_m2", "balance_m3",
    "cons_in_m1", "cons_in_m2", "cons_in_m3",
    "cons_out_m1", "cons_out_m2", "cons_out_m3",
    "fees_avg_m1", "fees_avg_m2", "fees_avg_m3",
    "fees_max_m1", "fees_max_m2", "fees_max_m3",
    "fees_min_m1", "fees_min_m2", "fees_min_m3",
    "txn_m1", "txn_m2", "txn_m3",
    "max_unpaid_life", "unpaid_m1_m3", "pd_m3", "pd_m6",
    "observed_dosage", "ep_m3", "ep_m6",
)
NUMERIC_COLUMNS = COLUMNS[1:]
# observed after the decision, so never used as model inputs
POST_TREATMENT = ("limit_m6", "pd_m6", "observed_dosage", "ep_m6")
FEATURE_COLUMNS = tuple(c for c in NUMERIC_COLUMNS if c not in POST_TREATMENT)

EFFECT_SHAPES = ("zero", "constant", "linear", "nonlinear")

SCORE_MEAN, SCORE_SD, SCORE_LO, SCORE_HI = 650.0, 80.0, 300.0, 850.0
BALANCE_REF, BALANCE_SCALE = 1500.0, 1000.0


class DataError(ValueError):
    """A portfolio file or record violates the schema."""


@dataclass(frozen=True)
class CustomerRecord:
    id: str
    bureau_score: float
    est_income: float
    interest_rate: float
    months_on_book: float
    limit_m3: float
    limit_m6: float
    avg_balance: float
    avg_consumption: float
    balance_m1: float
    balance_m2: float
    balance_m3: float
    cons_in_m1: float
    cons_in_m2: float
    cons_in_m3: float
    cons_out_m1: float
    cons_out_m2: float
    cons_out_m3: float
    fees_avg_m1: float
    fees_avg_m2: float
    fees_avg_m3: float
    fees_max_m1: float
    fees_max_m2: float
    fees_max_m3: float
    fees_min_m1: float
    fees_min_m2: float
    fees_min_m3: float
    txn_m1: float
    txn_m2: float
    txn_m3: float
    max_unpaid_life: float
    unpaid_m1_m3: float
    pd_m3: float
    pd_m6: float
    observed_dosage: float
    ep_m3: float
    ep_m6: float

    def __post_init__(self):
        problem = _record_problem({f.name: getattr(self, f.name) for f in fields(self)})
        if problem:
            raise DataError(f"customer {self.id}: {problem[1]} ({problem[0]})")


def _record_problem(rec: dict) -> tuple[str, str] | None:
    """First invariant violated by a record, as (column, message)."""
    for col in NUMERIC_COLUMNS:
        if not math.isfinite(rec[col]):
            return col, f"non-finite value {rec[col]!r}"
    for col in ("pd_m3", "pd_m6"):
        if not 0.0 <= rec[col] <= 1.0:
            return col, f"probability {rec[col]!r} outside [0, 1]"
    if not 0.0 < rec["interest_rate"] < 1.0:
        return "interest_rate", f"interest rate {rec['interest_rate']!r} outside (0, 1)"
    for col in ("limit_m3", "limit_m6"):
        if not rec[col] > 0:
            return col, f"limit {rec[col]!r} must be positive"
    if rec["observed_dosage"] < 0:
        return "observed_dosage", f"negative dosage {rec['observed_dosage']!r}"
    return None


@dataclass(frozen=True)
class GenConfig:
    """Synthetic portfolio recipe.

    Attributes:
        n_customers: rows to generate.
        k_levels: number of treated dosage levels; must equal
            ``len(cut_points) + 1``.
        cut_points: ascending limit factors separating the levels.
        effect_shape: ``zero``, ``constant`` (every level adds
            ``effect_scale``), ``linear`` (linear in score and balance, growing
            with the dose) or ``nonlinear`` (profit change implied by a larger
            limit: more balance drawn, higher PD, larger exposure).
        confounding_strength: weight of score and utilisation in the
            assignment logits; 0 gives assignment by the marginals alone.
        overlap_violation_fraction: share of the score distribution, taken
            from the bottom, whose customers are always kept at control.
        noise_sd: outcome noise, shared by all potential outcomes.
        effect_scale: size parameter of the constant and linear shapes and a
            multiplier on the nonlinear one (1 at the default 5).
        control_share: marginal probability of control; the rest is split
            evenly over the levels unless ``level_shares`` is given.
        dosage_range: (lowest, highest) limit factor; dosages are drawn in
            (lowest, highest] and each level's nominal dose is its bin midpoint.
    """

    n_customers: int = 20_000
    k_levels: int = 6
    cut_points: tuple[float, ...] = (1.2, 1.4, 1.6, 1.9, 2.2)
    effect_shape: str = "nonlinear"
    confounding_strength: float = 1.0
    overlap_violation_fraction: float = 0.05
    noise_sd: float = 5.0
    seed: int = 0
    effect_scale: float = 5.0
    control_share: float = 0.46
    level_shares: tuple[float, ...] | None = None
    dosage_range: tuple[float, float] = (1.0, 2.5)
    lgd: float = DEFAULT_LGD
    ccf: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "cut_points", tuple(float(c) for c in self.cut_points))
        object.__setattr__(self, "dosage_range", tuple(float(c) for c in self.dosage_range))
        if self.level_shares is not None:
            object.__setattr__(self, "level_shares", tuple(float(s) for s in self.level_shares))
        self.validate()

    def validate(self) -> None:
        if self.n_customers < 0:
            raise ValueError("n_customers must be >= 0")
        if self.k_levels < 1:
            raise ValueError("k_levels must be >= 1")
        if len(self.cut_points) != self.k_levels - 1:
            raise ValueError(f"k_levels={self.k_levels} needs {self.k_levels - 1} cut points, "
                             f"got {len(self.cut_points)}")
        lo, hi = self.dosage_range
        if not 0 < lo < hi:
            raise ValueError(f"dosage_range must satisfy 0 < low < high, got {self.dosage_range}")
        edges = (lo, *self.cut_points, hi)
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("cut_points must be strictly ascending and inside dosage_range")
        if self.effect_shape not in EFFECT_SHAPES:
            raise ValueError(f"effect_shape must be one of {EFFECT_SHAPES}, "
                             f"got {self.effect_shape!r}")
        if not self.confounding_strength >= 0:
            raise ValueError("confounding_strength must be non-negative")
        for name in ("overlap_violation_fraction", "control_share", "lgd", "ccf"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not self.noise_sd >= 0:
            raise ValueError("noise_sd must be non-negative")
        if self.level_shares is not None:
            if len(self.level_shares) != self.k_levels or min(self.level_shares) < 0:
                raise ValueError("level_shares needs k_levels non-negative entries")
            if sum(self.level_shares) <= 0:
                raise ValueError("level_shares must not all be zero")

    @property
    def marginals(self) -> np.ndarray:
        """Assignment probabilities for control and each level."""
        if self.level_shares is None:
            rest = np.full(self.k_levels, 1.0 / self.k_levels)
        else:
            rest = np.asarray(self.level_shares) / sum(self.level_shares)
        return np.concatenate([[self.control_share], (1 - self.control_share) * rest])

    @property
    def level_doses(self) -> np.ndarray:
        edges = np.array([self.dosage_range[0], *self.cut_points, self.dosage_range[1]])
        return (edges[:-1] + edges[1:]) / 2

    def to_dict(self) -> dict:
        out = asdict(self)
        out["cut_points"] = list(self.cut_points)
        out["dosage_range"] = list(self.dosage_range)
        if self.level_shares is not None:
            out["level_shares"] = list(self.level_shares)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "GenConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown generator settings: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class GroundTruth:
    """Potential outcomes, effects and assignment probabilities per customer.

    ``outcomes[:, 0]`` is Y(0) and ``outcomes[:, j]`` is Y(level j);
    ``cate[:, j-1]`` is ``outcomes[:, j] - outcomes[:, 0]``;
    ``propensity[:, j]`` is P(assigned level j | x), control in column 0.
    """

    ids: np.ndarray
    outcomes: np.ndarray
    propensity: np.ndarray
    level: np.ndarray

    @property
    def k(self) -> int:
        return self.outcomes.shape[1] - 1

    @property
    def cate(self) -> np.ndarray:
        return self.outcomes[:, 1:] - self.outcomes[:, :1]

    def to_frame(self) -> pd.DataFrame:
        k = self.k
        data = {"id": self.ids, "assigned_level": self.level, "y_0": self.outcomes[:, 0]}
        for j in range(1, k + 1):
            data[f"y_{j}"] = self.outcomes[:, j]
        cate = self.cate
        for j in range(1, k + 1):
            data[f"cate_{j}"] = cate[:, j - 1]
        for j in range(k + 1):
            data[f"prop_{j}"] = self.propensity[:, j]
        return pd.DataFrame(data)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "GroundTruth":
        k = sum(1 for c in frame.columns if c.startswith("y_")) - 1
        if k < 1:
            raise DataError("truth file has no potential-outcome columns")
        try:
            outcomes = frame[[f"y_{j}" for j in range(k + 1)]].to_numpy(float)
            prop = frame[[f"prop_{j}" for j in range(k + 1)]].to_numpy(float)
            level = frame["assigned_level"].to_numpy(int)
        except KeyError as exc:
            raise DataError(f"truth file is missing column {exc}") from None
        return cls(frame["id"].astype(str).to_numpy(), outcomes, prop, level)

    def select(self, ids) -> "GroundTruth":
        """Rows for ``ids``, in that order."""
        pos = pd.Index(self.ids).get_indexer(list(ids))
        if np.any(pos < 0):
            missing = [i for i, p in zip(ids, pos) if p < 0][:3]
            raise KeyError(f"ids not in ground truth: {missing}")
        return GroundTruth(self.ids[pos], self.outcomes[pos], self.propensity[pos],
                           self.level[pos])


# ---------------------------------------------------------------- generation


def _features(n: int, rng: np.random.Generator, cfg: GenConfig) -> dict:
    a, b = (SCORE_LO - SCORE_MEAN) / SCORE_SD, (SCORE_HI - SCORE_MEAN) / SCORE_SD
    score = np.round(stats.truncnorm.rvs(a, b, loc=SCORE_MEAN, scale=SCORE_SD, size=n,
                                         random_state=rng))
    z = (score - SCORE_MEAN) / SCORE_SD
    income = np.round(np.exp(rng.normal(8.0 + 0.1 * z, 0.45)), 2)
    rate = np.round(np.clip(0.032 - 0.004 * z + rng.normal(0, 0.004, n), 0.012, 0.06), 5)
    months = 6 + rng.poisson(24, n)
    limit = np.round(income * np.exp(rng.normal(-0.2 + 0.25 * z, 0.3)), -1)
    limit = np.maximum(limit, 100.0)
    util = np.clip(rng.beta(2.0, 3.0, n) * (1.0 - 0.15 * z), 0.01, 0.98)

    bal = np.empty((n, 3))
    for m in range(3):
        bal[:, m] = np.clip(limit * util * np.exp(rng.normal(0, 0.08, n)), 0, limit)
    bal = np.round(bal, 2)
    avg_bal = np.round(np.clip(bal.mean(axis=1) * np.exp(rng.normal(0, 0.03, n)), 0, limit), 2)

    cons_in = np.round(limit[:, None] * util[:, None] * 0.25
                       * rng.lognormal(0, 0.5, (n, 3)), 2)
    cons_out = np.round(limit[:, None] * util[:, None] * 0.15
                        * rng.lognormal(0, 0.6, (n, 3)), 2)
    avg_cons = np.round((cons_in + cons_out).mean(axis=1), 2)

    fees_min = rng.poisson(0.5, (n, 3)).astype(float)
    fees_max = fees_min + rng.poisson(1.5, (n, 3))
    fees_avg = (fees_min + fees_max) / 2
    txn = rng.poisson(8 + 20 * util[:, None], (n, 3)).astype(float)

    risk = 1.0 / (1.0 + np.exp(2.0 * z))
    max_unpaid = rng.poisson(0.3 + 3.0 * risk).astype(float)
    unpaid = rng.binomial(3, 0.02 + 0.3 * risk).astype(float)

    pd3 = np.round(expit(-5.3 - 0.9 * z + 1.2 * (util - 0.4) + 0.35 * unpaid
                         + rng.normal(0, 0.2, n)), 6)
    ead = exposure_at_default(bal[:, 2], limit, cfg.ccf)
    ep3 = expected_profit(rate, bal[:, 2], pd3, cfg.lgd, ead)
    return {
        "bureau_score": score, "est_income": income, "interest_rate": rate,
        "months_on_book": months.astype(float), "limit_m3": limit,
        "avg_balance": avg_bal, "avg_consumption": avg_cons,
        **{f"balance_m{m + 1}": bal[:, m] for m in range(3)},
        **{f"cons_in_m{m + 1}": cons_in[:, m] for m in range(3)},
        **{f"cons_out_m{m + 1}": cons_out[:, m] for m in range(3)},
        **{f"fees_avg_m{m + 1}": fees_avg[:, m] for m in range(3)},
        **{f"fees_max_m{m + 1}": fees_max[:, m] for m in range(3)},
        **{f"fees_min_m{m + 1}": fees_min[:, m] for m in range(3)},
        **{f"txn_m{m + 1}": txn[:, m] for m in range(3)},
        "max_unpaid_life": max_unpaid, "unpaid_m1_m3": unpaid,
        "pd_m3": pd3, "ep_m3": ep3,
    }


def _z_score(f: dict) -> np.ndarray:
    return (f["bureau_score"] - SCORE_MEAN) / SCORE_SD


def _utilisation(f: dict) -> np.ndarray:
    return f["balance_m3"] / f["limit_m3"]


def score_threshold(fraction: float) -> float:
    """Score below which the bottom ``fraction`` of the score law lies."""
    a, b = (SCORE_LO - SCORE_MEAN) / SCORE_SD, (SCORE_HI - SCORE_MEAN) / SCORE_SD
    return float(stats.truncnorm.ppf(fraction, a, b, loc=SCORE_MEAN, scale=SCORE_SD))


def violates_overlap(scores, fraction: float) -> np.ndarray:
    """Customers in the always-control region (lowest scores)."""
    scores = np.asarray(scores, dtype=float)
    if fraction <= 0:
        return np.zeros(scores.shape, dtype=bool)
    return scores <= score_threshold(fraction)


def assignment_probabilities(f: dict, cfg: GenConfig) -> np.ndarray:
    """(n, k+1) multinomial-logit assignment law.

    Higher scores and lower utilisation push customers toward larger
    increases, with weight ``confounding_strength``.
    """
    k = cfg.k_levels
    idx = 0.8 * _z_score(f) - 2.0 * (_utilisation(f) - 0.4)
    slope = np.arange(k + 1) / k
    logits = np.log(np.maximum(cfg.marginals, 1e-300))[None, :] \
        + cfg.confounding_strength * idx[:, None] * slope[None, :]
    logits[:, cfg.marginals == 0] = -np.inf
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    forced = violates_overlap(f["bureau_score"], cfg.overlap_violation_fraction)
    p[forced] = 0.0
    p[forced, 0] = 1.0
    return p


def _post_increase(f: dict, dose: np.ndarray, cfg: GenConfig):
    """Balance, PD and limit after multiplying the limit by ``dose``."""
    util = _utilisation(f)
    extra = dose - 1.0
    draw = 0.1 + 0.6 * util
    limit = f["limit_m3"] * dose
    balance = np.minimum(f["balance_m3"] + draw * extra * f["limit_m3"], limit)
    pd = expit(logit(np.clip(f["pd_m3"], 1e-9, 1 - 1e-9)) + 0.5 * extra)
    return balance, pd, limit


def effect(f: dict, dose: float, cfg: GenConfig) -> np.ndarray:
    """True effect of moving a customer's limit factor from 1 to ``dose``."""
    n = len(f["bureau_score"])
    shape = cfg.effect_shape
    if shape == "zero":
        return np.zeros(n)
    if shape == "constant":
        return np.full(n, cfg.effect_scale)
    lo, hi = cfg.dosage_range
    if shape == "linear":
        s = (dose - lo) / (hi - lo)
        zb = (f["balance_m3"] - BALANCE_REF) / BALANCE_SCALE
        return cfg.effect_scale * s * (1.0 + 0.6 * _z_score(f) + 0.6 * zb)
    balance, pd, limit = _post_increase(f, np.full(n, dose), cfg)
    ead = exposure_at_default(balance, limit, cfg.ccf)
    after = expected_profit(f["interest_rate"], balance, pd, cfg.lgd, ead)
    return (cfg.effect_scale / 5.0) * (after - f["ep_m3"])


def _drift(f: dict) -> np.ndarray:
    # month-3 to month-6 change shared by every level
    return 1.5 * _z_score(f) - 0.5 * (f["interest_rate"] - 0.032) * 100


def generate_portfolio(config: GenConfig) -> tuple[pd.DataFrame, GroundTruth]:
    """Draw a portfolio and its ground truth; deterministic in ``config.seed``."""
    config.validate()
    n, k = config.n_customers, config.k_levels
    rng = np.random.default_rng(config.seed)
    f = _features(n, rng, config)

    prop = assignment_probabilities(f, config)
    u = rng.random(n)
    level = np.minimum((u[:, None] > np.cumsum(prop, axis=1)).sum(axis=1), k)
    # guard against round-off sending a forced-control row to a level
    level = np.where(prop[np.arange(n), level] > 0, level, 0)

    edges = np.array([config.dosage_range[0], *config.cut_points, config.dosage_range[1]])
    lo, hi = edges[np.maximum(level - 1, 0)], edges[np.maximum(level, 1)]
    # uniform on (lo, hi]: 1 - U lies in (0, 1]
    draw = lo + (hi - lo) * (1.0 - rng.random(n))
    dosage = np.where(level > 0, np.round(draw, 4), 0.0)
    dosage = np.where((level > 0) & (dosage <= lo), hi, dosage)

    noise = rng.normal(0.0, config.noise_sd, n) if config.noise_sd > 0 else np.zeros(n)
    outcomes = np.empty((n, k + 1))
    outcomes[:, 0] = f["ep_m3"] + _drift(f) + noise
    for j, dose in enumerate(config.level_doses, start=1):
        outcomes[:, j] = outcomes[:, 0] + effect(f, float(dose), config)

    idx = np.arange(n)
    treated = level > 0
    _, pd_after, _ = _post_increase(f, np.where(treated, dosage, 1.0), config)
    frame = pd.DataFrame({"id": [f"C{i:06d}" for i in range(n)], **f})
    frame["limit_m6"] = np.where(treated, np.round(f["limit_m3"] * np.maximum(dosage, 1.0), 2),
                                 f["limit_m3"])
    frame["pd_m6"] = np.where(treated, np.round(pd_after, 6), f["pd_m3"])
    frame["observed_dosage"] = dosage
    frame["ep_m6"] = outcomes[idx, level]
    frame = frame[list(COLUMNS)]
    truth = GroundTruth(frame["id"].to_numpy(), outcomes, prop, level)
    return frame, truth


# ---------------------------------------------------------------------- I/O


def truth_path(path) -> Path:
    """``portfolio.csv`` -> ``portfolio.truth.csv``."""
    path = Path(path)
    return path.with_name(f"{path.stem}.truth{path.suffix or '.csv'}")


def to_frame(records: Iterable[CustomerRecord] | pd.DataFrame) -> pd.DataFrame:
    if isinstance(records, pd.DataFrame):
        missing = [c for c in COLUMNS if c not in records.columns]
        if missing:
            raise DataError(f"portfolio is missing column {missing[0]!r}")
        return records[list(COLUMNS)]
    rows = [asdict(r) for r in records]
    return pd.DataFrame(rows, columns=list(COLUMNS))


def to_records(frame: pd.DataFrame) -> list[CustomerRecord]:
    frame = to_frame(frame)
    return [CustomerRecord(str(row[0]), *map(float, row[1:]))
            for row in frame.itertuples(index=False, name=None)]


def write_portfolio(records, path) -> None:
    """Write records (a frame or CustomerRecord iterable) in schema column order."""
    frame = to_frame(records)
    try:
        frame.to_csv(path, index=False, lineterminator="\n")
    except OSError as exc:
        raise OSError(f"cannot write portfolio to {path}: {exc}") from exc


def write_truth(truth: GroundTruth, path) -> None:
    truth.to_frame().to_csv(path, index=False, lineterminator="\n")


def load_truth(path) -> GroundTruth:
    frame = pd.read_csv(path, dtype={"id": str}, float_precision="round_trip")
    return GroundTruth.from_frame(frame)


def _parse_column(raw: pd.Series, col: str) -> np.ndarray:
    out = np.empty(len(raw))
    for i, cell in enumerate(raw.tolist()):
        try:
            out[i] = float(cell)
        except ValueError:
            raise DataError(f"row {i + 1}, column {col!r}: cannot parse {cell!r} "
                            "as a number") from None
    return out


def load_portfolio(path) -> pd.DataFrame:
    """Read and validate a portfolio CSV.

    Errors name the offending data row (1-based, header excluded) and column.

    Raises:
        FileNotFoundError: if ``path`` does not exist.
        DataError: on a missing column, an unparseable number or a value
            outside its domain.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"portfolio file not found: {path}")
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DataError(f"{path}: file is empty (no header row)") from None
    missing = [c for c in COLUMNS if c not in raw.columns]
    if missing:
        raise DataError(f"{path}: missing column {missing[0]!r}")
    data = {"id": raw["id"].astype(str).to_numpy()}
    for col in NUMERIC_COLUMNS:
        data[col] = _parse_column(raw[col], col)
    frame = pd.DataFrame(data, columns=list(COLUMNS))
    for i, rec in enumerate(frame.to_dict("records")):
        problem = _record_problem(rec)
        if problem:
            col, msg = problem
            raise DataError(f"row {i + 1}, column {col!r}: {msg}")
    return frame


def feature_matrix(frame: pd.DataFrame, columns: Sequence[str] = FEATURE_COLUMNS) -> np.ndarray:
    return frame[list(columns)].to_numpy(dtype=float)
