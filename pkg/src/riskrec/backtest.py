"""Retrospective evaluation of a policy against the company's past decisions.

Scenarios compare the suggested level (gs) with the past policy's level
(cpp):

====  ==========================================
I     both increase, by the same level
II    both increase, by different levels
III   suggestion increases, past policy kept
IV    suggestion keeps, past policy increased
V     both keep the limit
====  ==========================================
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

SCENARIOS = ("I", "II", "III", "IV", "V")
METRICS = ("size", "avg_ep_p", "avg_ep_p_ratio", "avg_ep_r", "avg_ep_r_ratio")


def classify_scenario(gs_level: int, cpp_level: int, k: int | None = None) -> str:
    """Scenario of one (suggested, past) level pair.

    Raises:
        ValueError: for a negative level or one above ``k`` when given.
    """
    for name, lv in (("gs", gs_level), ("cpp", cpp_level)):
        if int(lv) != lv or lv < 0 or (k is not None and lv > k):
            bound = f"0..{k}" if k is not None else ">= 0"
            raise ValueError(f"{name} level {lv!r} outside {bound}")
    if gs_level > 0 and cpp_level > 0:
        return "I" if gs_level == cpp_level else "II"
    if gs_level > 0:
        return "III"
    return "IV" if cpp_level > 0 else "V"


def classify_many(gs, cpp, k: int | None = None) -> np.ndarray:
    gs, cpp = np.asarray(gs), np.asarray(cpp)
    return np.array([classify_scenario(int(a), int(b), k) for a, b in zip(gs, cpp)],
                    dtype=object)


@dataclass(frozen=True)
class ScenarioMetrics:
    """Per-scenario sizes and per-customer averages; None where a scenario is empty.

    Ratios are percentages of the month-3 limit, averaged per customer.
    """

    rows: dict

    @property
    def total(self) -> int:
        return sum(r["size"] for r in self.rows.values())

    def to_dict(self) -> dict:
        return {s: dict(self.rows[s]) for s in SCENARIOS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_markdown(self, title: str | None = None) -> str:
        head = ("| Scenario | Size | Avg EP_P per cust. | Avg EP_P/L_R per cust. (%) "
                "| Avg EP_R per cust. | Avg EP_R/L_R per cust. (%) |")
        lines = [f"**{title}**\n" if title else "", head, "|---|---:|---:|---:|---:|---:|"]
        for s in SCENARIOS:
            r = self.rows[s]
            cells = [str(r["size"])] + ["-" if r[m] is None else f"{r[m]:.2f}"
                                        for m in METRICS[1:]]
            lines.append(f"| {s} | " + " | ".join(cells) + " |")
        return "\n".join(line for line in lines if line) + "\n"


def _mean(x) -> float | None:
    return float(np.mean(x)) if len(x) else None


def evaluate(decisions: Sequence, cpp_levels, records: pd.DataFrame,
             ids: Sequence[str] | None = None) -> ScenarioMetrics:
    """Scenario table for a list of decisions.

    Args:
        decisions: PolicyDecision objects (``id`` and ``level`` are used).
        cpp_levels: past-policy level per decision, aligned with ``decisions``
            (or with ``ids`` when given).
        records: portfolio rows carrying ``id``, ``ep_m3``, ``ep_m6`` and
            ``limit_m3``.
        ids: optional id order of ``cpp_levels``; must contain every
            decision id.

    Raises:
        KeyError: if a decision id is missing from ``records`` or ``ids``.
    """
    dec_ids = [str(d.id) for d in decisions]
    gs = np.array([d.level for d in decisions], dtype=int)
    cpp = np.asarray(cpp_levels, dtype=int)
    if ids is not None:
        pos = pd.Index([str(i) for i in ids]).get_indexer(dec_ids)
        if np.any(pos < 0):
            raise KeyError(f"decision ids without a past-policy level: "
                           f"{[i for i, p in zip(dec_ids, pos) if p < 0][:3]}")
        cpp = cpp[pos]
    elif len(cpp) != len(gs):
        raise ValueError(f"{len(gs)} decisions but {len(cpp)} past-policy levels")
    rec_pos = pd.Index(records["id"].astype(str)).get_indexer(dec_ids)
    if np.any(rec_pos < 0):
        raise KeyError(f"decision ids missing from records: "
                       f"{[i for i, p in zip(dec_ids, rec_pos) if p < 0][:3]}")
    ep_p = records["ep_m6"].to_numpy(float)[rec_pos]
    ep_r = records["ep_m3"].to_numpy(float)[rec_pos]
    lim = records["limit_m3"].to_numpy(float)[rec_pos]
    scen = classify_many(gs, cpp)
    rows = {}
    for s in SCENARIOS:
        m = scen == s
        rows[s] = {
            "size": int(m.sum()),
            "avg_ep_p": _mean(ep_p[m]),
            "avg_ep_p_ratio": _mean(100.0 * ep_p[m] / lim[m]),
            "avg_ep_r": _mean(ep_r[m]),
            "avg_ep_r_ratio": _mean(100.0 * ep_r[m] / lim[m]),
        }
    return ScenarioMetrics(rows)


def level_distribution(levels, k: int) -> dict:
    """Count and share of customers per level 0..k."""
    levels = np.asarray(levels, dtype=int)
    counts = np.bincount(levels, minlength=k + 1)[: k + 1] if levels.size else np.zeros(k + 1)
    n = max(int(levels.size), 1)
    return {str(j): {"count": int(c), "share": float(c) / n} for j, c in enumerate(counts)}


def oracle_policy_value(truth, decisions: Sequence) -> float:
    """Sum of each customer's potential outcome at the chosen level.

    Raises:
        KeyError: if a decision id is absent from ``truth``.
    """
    if not decisions:
        return 0.0
    sub = truth.select([str(d.id) for d in decisions])
    levels = np.array([d.level for d in decisions], dtype=int)
    if np.any(levels > sub.k):
        raise ValueError("decision level exceeds the levels in the ground truth")
    return float(np.sum(sub.outcomes[np.arange(len(levels)), levels]))
