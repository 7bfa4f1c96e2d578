"""Markdown summary assembled from the artifacts in an output directory."""

from __future__ import annotations

import json
from pathlib import Path

from .backtest import ScenarioMetrics

ARTIFACTS = ("partition.json", "selection.json", "evaluation.json")
POLICY_TITLES = {"cl": "CL", "cl-cvar": "CL+CVaR", "cl-cvar-fl": "CL+CVaR+FL",
                 "predict-only": "Prediction only"}


def _load(path: Path):
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError):
        return None


def partition_table(part: dict) -> str:
    lines = ["| Level | Dosage | Count |", "|---:|---:|---:|"]
    counts = part.get("counts", [])
    for j, d in enumerate(part.get("levels", []), start=1):
        dose = "-" if d is None else f"{d:.4f}"
        lines.append(f"| {j} | {dose} | {counts[j - 1] if j <= len(counts) else '-'} |")
    return "\n".join(lines) + "\n"


def distribution_table(evaluation: dict) -> str:
    cols = ["CPP"] + [POLICY_TITLES.get(p, p) for p in evaluation["policies"]]
    dists = [evaluation.get("cpp_distribution", {})] + \
        [e["distribution"] for e in evaluation["policies"].values()]
    levels = sorted({int(j) for d in dists for j in d})
    lines = ["| Level | " + " | ".join(cols) + " |", "|---:|" + "---:|" * len(cols)]
    for j in levels:
        cells = []
        for d in dists:
            c = d.get(str(j))
            cells.append("-" if c is None else f"{c['count']} ({100 * c['share']:.1f}%)")
        lines.append(f"| {j} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def value_table(evaluation: dict) -> str | None:
    base = evaluation.get("baselines")
    if base is None:
        return None
    lines = ["| Policy | Treated | Oracle value |", "|---|---:|---:|"]
    for name, e in evaluation["policies"].items():
        lines.append(f"| {POLICY_TITLES.get(name, name)} | {100 * e['treated_fraction']:.1f}% "
                     f"| {e['oracle_value']:.2f} |")
    for name in sorted(base):
        lines.append(f"| {name.replace('_', ' ')} | - | {base[name]:.2f} |")
    return "\n".join(lines) + "\n"


def selection_table(selection: dict) -> str:
    levels = sorted(selection["levels"], key=int)
    names = [c["label"] for c in selection["candidates"]]
    lines = ["| Method | " + " | ".join(f"Level {j}" for j in levels) + " |",
             "|---|" + "---|" * len(levels)]
    rows = {i: [] for i in range(len(names))}
    for j in levels:
        entry = selection["levels"][j]
        results = entry.get("results")
        for i in rows:
            if not results:
                rows[i].append("n/a")
                continue
            r = results[i]
            mark = "**" if r["method"] == entry["chosen"] else ""
            rows[i].append(f"{mark}{r['mean']:.3f} ± {r['sd']:.3f}{mark}")
    for i, name in enumerate(names):
        lines.append(f"| {name} | " + " | ".join(rows[i]) + " |")
    return "\n".join(lines) + "\n"


def build_report(out_dir) -> tuple[str, list[str]]:
    """Render the report text; also returns the list of missing artifacts."""
    out_dir = Path(out_dir)
    loaded = {name: _load(out_dir / name) for name in ARTIFACTS}
    missing = [name for name, v in loaded.items() if v is None]
    parts = ["# Credit-limit recommendation report\n"]
    if loaded["partition.json"]:
        parts += ["## Dosage levels\n", partition_table(loaded["partition.json"])]
    ev = loaded["evaluation.json"]
    if ev and ev.get("policies"):
        parts += ["## Level distribution\n", distribution_table(ev)]
        values = value_table(ev)
        if values:
            parts += ["## Policy value on the synthetic ground truth\n", values]
    if loaded["selection.json"]:
        parts += ["## Model selection (estimated root PEHE, mean ± sd over folds)\n",
                  selection_table(loaded["selection.json"])]
        errors = {j: e["error"] for j, e in loaded["selection.json"]["levels"].items()
                  if "error" in e}
        if errors:
            parts.append("\n".join(f"- level {j}: {msg}" for j, msg in
                                   sorted(errors.items(), key=lambda t: int(t[0]))) + "\n")
    if ev:
        for name, entry in ev.get("policies", {}).items():
            parts += [f"## Scenario evaluation: {POLICY_TITLES.get(name, name)}\n",
                      ScenarioMetrics(entry["scenarios"]).to_markdown()]
    if missing:
        parts += ["## Missing artifacts\n", "\n".join(f"- {m}" for m in missing) + "\n"]
    return "\n".join(parts), missing


def write_report(out_dir) -> tuple[Path, list[str]]:
    text, missing = build_report(out_dir)
    path = Path(out_dir) / "report.md"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path, missing
