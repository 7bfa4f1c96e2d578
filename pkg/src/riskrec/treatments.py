"""Dosage discretisation, per-level propensity models and overlap trimming."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .learners import LearnerSpec, fit_classifier

DEFAULT_TRIM_EPS = 0.05


@dataclass(frozen=True)
class DosagePartition:
    """Cut points t_1 < ... < t_{k-1} and the mean dosage of each bin.

    Bin j (1-indexed) is (t_{j-1}, t_j] with t_0 = -inf and t_k = +inf. An
    empty bin keeps its index; its level is NaN and ``defined[j-1]`` is False.
    """

    cut_points: tuple[float, ...]
    levels: tuple[float, ...]
    counts: tuple[int, ...]

    @property
    def k(self) -> int:
        return len(self.levels)

    @property
    def defined(self) -> tuple[bool, ...]:
        return tuple(c > 0 for c in self.counts)

    def dosage(self, level: int) -> float:
        """Representative dosage of a level; 0 for control."""
        if level == 0:
            return 0.0
        return self.levels[level - 1]

    def dosages(self, levels) -> np.ndarray:
        table = np.concatenate([[0.0], np.asarray(self.levels, dtype=float)])
        return table[np.asarray(levels, dtype=int)]

    def to_dict(self) -> dict:
        return {
            "cut_points": list(self.cut_points),
            "levels": [None if np.isnan(b) else b for b in self.levels],
            "counts": list(self.counts),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "DosagePartition":
        levels = tuple(float("nan") if b is None else float(b) for b in data["levels"])
        return cls(tuple(float(c) for c in data["cut_points"]), levels,
                   tuple(int(c) for c in data["counts"]))


def _check_cuts(cut_points) -> np.ndarray:
    cuts = np.asarray(cut_points, dtype=float).ravel()
    if cuts.size and (np.any(~np.isfinite(cuts)) or np.any(np.diff(cuts) <= 0)):
        raise ValueError(f"cut points must be finite and strictly ascending, got {list(cuts)}")
    return cuts


def _bins(dosage: np.ndarray, cuts: np.ndarray) -> np.ndarray:
    # inclusive upper bounds: a dosage equal to t_j falls in bin j
    return np.searchsorted(cuts, dosage, side="left") + 1


def discretize(dosages: Sequence[float], cut_points: Sequence[float]) -> DosagePartition:
    """Bin the positive dosages and take each bin's mean as its level.

    Zero dosages (control) are ignored.

    Raises:
        ValueError: on negative dosages, unordered cuts, or when no dosage is
            positive.
    """
    d = np.asarray(dosages, dtype=float).ravel()
    if d.size == 0:
        raise ValueError("no dosages given")
    if np.any(d < 0) or np.any(~np.isfinite(d)):
        raise ValueError("dosages must be finite and non-negative")
    cuts = _check_cuts(cut_points)
    treated = d[d > 0]
    if treated.size == 0:
        raise ValueError("all dosages are zero; nothing to discretize")
    k = cuts.size + 1
    b = _bins(treated, cuts)
    counts = np.bincount(b, minlength=k + 1)[1:]
    sums = np.bincount(b, weights=treated, minlength=k + 1)[1:]
    with np.errstate(invalid="ignore", divide="ignore"):
        levels = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return DosagePartition(tuple(cuts.tolist()), tuple(levels.tolist()),
                           tuple(int(c) for c in counts))


def assign_levels(dosage, partition: DosagePartition) -> np.ndarray:
    """Vectorised level assignment: 0 for zero dosage, else the bin index."""
    d = np.asarray(dosage, dtype=float)
    if np.any(d < 0) or np.any(~np.isfinite(d)):
        raise ValueError("dosage must be finite and non-negative")
    cuts = np.asarray(partition.cut_points, dtype=float)
    return np.where(d == 0, 0, _bins(d, cuts)).astype(int)


def assign_level(dosage: float, partition: DosagePartition) -> int:
    return int(assign_levels(np.asarray([dosage]), partition)[0])


@dataclass(frozen=True)
class LevelDataset:
    """Rows in {control, level}; ``treatment`` is 1 for the level."""

    level: int
    X: np.ndarray
    treatment: np.ndarray
    y: np.ndarray
    rows: np.ndarray

    @property
    def n(self) -> int:
        return len(self.y)

    def subset(self, mask) -> "LevelDataset":
        mask = np.asarray(mask)
        return replace(self, X=self.X[mask], treatment=self.treatment[mask],
                       y=self.y[mask], rows=self.rows[mask])


def level_dataset(X, levels, y, level: int) -> LevelDataset:
    """Restrict a portfolio to control rows and rows assigned ``level``."""
    levels = np.asarray(levels)
    keep = (levels == 0) | (levels == level)
    rows = np.flatnonzero(keep)
    return LevelDataset(level=level, X=np.asarray(X, dtype=float)[rows],
                        treatment=(levels[rows] == level).astype(float),
                        y=np.asarray(y, dtype=float)[rows], rows=rows)


def in_overlap(g: np.ndarray, eps: float) -> np.ndarray:
    """eps <= g <= 1-eps; with eps == 0 the strict 0 < g < 1."""
    g = np.asarray(g, dtype=float)
    if eps == 0:
        return (g > 0) & (g < 1)
    return (g >= eps) & (g <= 1 - eps)


@dataclass(frozen=True)
class PropensityModel:
    level: int
    model: object
    trim_eps: float = DEFAULT_TRIM_EPS

    def predict(self, X) -> np.ndarray:
        return np.clip(self.model.predict(np.asarray(X, dtype=float)), 0.0, 1.0)

    def in_overlap(self, X) -> np.ndarray:
        return in_overlap(self.predict(X), self.trim_eps)


def fit_propensity(data: LevelDataset, learner: LearnerSpec | None = None,
                   trim_eps: float = DEFAULT_TRIM_EPS) -> PropensityModel:
    """P(T = level | X) on the {control, level} rows.

    Raises:
        ValueError: if only one class is present.
    """
    if not 0 <= trim_eps < 0.5:
        raise ValueError(f"trim_eps must lie in [0, 0.5), got {trim_eps}")
    t = data.treatment
    if data.n == 0 or t.min() == t.max():
        raise ValueError(
            f"level {data.level}: propensity fit needs both control and treated rows")
    learner = learner or LearnerSpec.logistic()
    return PropensityModel(data.level, fit_classifier(learner, data.X, t), trim_eps)


@dataclass(frozen=True)
class OverlapDataset(LevelDataset):
    propensity: np.ndarray = field(default_factory=lambda: np.empty(0))
    gate: PropensityModel | None = None

    def subset(self, mask) -> "OverlapDataset":
        mask = np.asarray(mask)
        return replace(super().subset(mask), propensity=self.propensity[mask])

    def has_both_arms(self) -> bool:
        return self.n > 0 and 0 < self.treatment.sum() < self.n


def overlap_subset(data: LevelDataset, model: PropensityModel) -> OverlapDataset:
    """Keep rows whose fitted propensity lies inside the trimming band."""
    if model.level != data.level:
        raise ValueError(
            f"propensity model is for level {model.level}, data for level {data.level}")
    g = model.predict(data.X) if data.n else np.empty(0)
    keep = in_overlap(g, model.trim_eps)
    return OverlapDataset(level=data.level, X=data.X[keep], treatment=data.treatment[keep],
                          y=data.y[keep], rows=data.rows[keep], propensity=g[keep],
                          gate=model)
