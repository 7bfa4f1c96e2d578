"""End-to-end stages: simulate, discretize, select, recommend, evaluate.

Every stage is a pure function of the configuration and its input files,
and writes its artifacts into the output directory. Later stages recompute
the earlier in-memory results they need, so any stage can run on a fresh
directory holding only the portfolio.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import backtest, datagen, policy
from .config import ConfigError, PipelineConfig
from .finance import estimate_ccf
from .metalearners import CateModel, fit_cate
from .metalearners.methods import role_seed
from .risk import bootstrap_matrix
from .selection import SelectionReport, select_model
from .treatments import (
    DosagePartition,
    OverlapDataset,
    assign_levels,
    discretize,
    fit_propensity,
    level_dataset,
    overlap_subset,
)

POLICY_FILES = {
    "cl": "decisions_cl.csv",
    "cl-cvar": "decisions_cl_cvar.csv",
    "cl-cvar-fl": "decisions_cl_cvar_fl.csv",
    "predict-only": "decisions_predict_only.csv",
}

# stage seeds, derived from the master seed
SEED_SPLIT, SEED_SELECT, SEED_FIT, SEED_BOOT, SEED_FORWARD, SEED_RANDOM = range(1, 7)


class NumericError(RuntimeError):
    """A model fit or numerical step failed."""


def _write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _write_json(path: Path, data) -> Path:
    return _write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------------ simulate


def simulate(cfg: PipelineConfig) -> list[Path]:
    gen = cfg.gen_config()
    if cfg.defaulters:
        gen = GenCcf.apply(cfg, gen)
    frame, truth = datagen.generate_portfolio(gen)
    path = cfg.portfolio_path
    path.parent.mkdir(parents=True, exist_ok=True)
    datagen.write_portfolio(frame, path)
    datagen.write_truth(truth, cfg.truth_path)
    return [path, cfg.truth_path]


class GenCcf:
    """CCF estimated from a defaulter file, falling back to the configured value."""

    @staticmethod
    def estimate(path) -> float:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"defaulters: file not found: {path}")
        frame = pd.read_csv(path)
        cols = ["balance_ref", "limit_ref", "balance_at_default"]
        missing = [c for c in cols if c not in frame.columns]
        if missing:
            raise datagen.DataError(f"{path}: missing column {missing[0]!r}")
        return estimate_ccf(frame[cols].to_numpy(float))

    @classmethod
    def apply(cls, cfg: PipelineConfig, gen: datagen.GenConfig) -> datagen.GenConfig:
        try:
            ccf = cls.estimate(cfg.defaulters)
        except ValueError:
            if cfg.ccf is None:
                raise
            ccf = cfg.ccf
        return datagen.GenConfig.from_dict({**gen.to_dict(), "ccf": ccf})


# --------------------------------------------------------------- shared state


def load_inputs(cfg: PipelineConfig) -> pd.DataFrame:
    path = cfg.portfolio_path
    if not path.exists():
        raise ConfigError(f"portfolio: file not found: {path}")
    return datagen.load_portfolio(path)


def train_test_split(n: int, test_fraction: float, seed: int) -> np.ndarray:
    """Boolean test mask of size round(test_fraction * n)."""
    rng = np.random.default_rng([int(seed) % (2**63), SEED_SPLIT])
    test = np.zeros(n, dtype=bool)
    test[rng.permutation(n)[: int(round(test_fraction * n))]] = True
    return test


@dataclass
class LevelState:
    level: int
    data: OverlapDataset | None = None
    error: str | None = None
    model: CateModel | None = None


@dataclass
class Workspace:
    """In-memory results shared by the stages of one run."""

    cfg: PipelineConfig
    frame: pd.DataFrame
    partition: DosagePartition
    levels: np.ndarray
    test: np.ndarray
    X: np.ndarray
    states: dict[int, LevelState] = field(default_factory=dict)
    selection: SelectionReport | None = None
    forward: policy.ForwardModel | None = None

    @classmethod
    def build(cls, cfg: PipelineConfig) -> "Workspace":
        frame = load_inputs(cfg)
        if len(frame) == 0:
            raise datagen.DataError(f"{cfg.portfolio_path}: portfolio has no rows")
        dosage = frame["observed_dosage"].to_numpy(float)
        partition = discretize(dosage, cfg.resolved_cut_points())
        levels = assign_levels(dosage, partition)
        test = train_test_split(len(frame), cfg.test_fraction, cfg.seed)
        return cls(cfg, frame, partition, levels, test, datagen.feature_matrix(frame))

    @property
    def k(self) -> int:
        return self.partition.k

    @property
    def y(self) -> np.ndarray:
        return self.frame["ep_m6"].to_numpy(float)

    @property
    def dosages(self) -> tuple[float, ...]:
        return self.partition.levels

    def level_state(self, level: int) -> LevelState:
        if level in self.states:
            return self.states[level]
        state = LevelState(level)
        train = ~self.test
        if not self.partition.defined[level - 1]:
            state.error = "empty dosage bin"
        else:
            raw = level_dataset(self.X[train], self.levels[train], self.y[train], level)
            try:
                gate = fit_propensity(raw, self.cfg.propensity_spec(), self.cfg.trim_eps)
                data = overlap_subset(raw, gate)
                if data.n < 50 or not data.has_both_arms():
                    state.error = f"overlap set too small ({data.n} rows)"
                else:
                    state.data = data
            except ValueError as exc:
                state.error = str(exc)
        self.states[level] = state
        return state

    def select(self) -> SelectionReport:
        if self.selection is not None:
            return self.selection
        cands = self.cfg.candidate_specs()
        report = SelectionReport(cands)
        for level in range(1, self.k + 1):
            state = self.level_state(level)
            if state.data is None:
                report.errors[level] = state.error
                continue
            try:
                select_model(cands, state.data, folds=self.cfg.folds,
                             correction_order=self.cfg.correction_order,
                             seed=role_seed(self.cfg.seed, SEED_SELECT * 100 + level),
                             report=report)
            except ValueError as exc:
                report.errors[level] = str(exc)
        self.selection = report
        return report

    def cate_models(self) -> dict[int, CateModel]:
        report = self.select()
        models = {}
        for level in range(1, self.k + 1):
            state = self.level_state(level)
            spec = report.chosen(level)
            if spec is None:
                continue
            if state.model is None:
                state.model = fit_cate(spec, state.data,
                                       seed=role_seed(self.cfg.seed, SEED_FIT * 100 + level))
            models[level] = state.model
        return models

    def test_ids(self) -> list[str]:
        return self.frame["id"].astype(str).to_numpy()[self.test].tolist()


# ------------------------------------------------------------------- stages


def run_discretize(cfg: PipelineConfig, ws: Workspace | None = None) -> list[Path]:
    ws = ws or Workspace.build(cfg)
    return [_write_text(cfg.out_dir / "partition.json", ws.partition.to_json() + "\n")]


def run_select(cfg: PipelineConfig, ws: Workspace | None = None) -> list[Path]:
    ws = ws or Workspace.build(cfg)
    report = ws.select()
    return [_write_text(cfg.out_dir / "selection.json", report.to_json() + "\n"),
            _write_text(cfg.out_dir / "selection.md", report.to_markdown())]


def write_decisions(path: Path, decisions) -> Path:
    frame = pd.DataFrame([d.to_row() for d in decisions], columns=list(policy.DECISION_COLUMNS))
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def read_decisions(path) -> list[policy.PolicyDecision]:
    frame = pd.read_csv(path, dtype={"id": str, "value_per_level_json": str},
                        keep_default_na=False, float_precision="round_trip")
    out = []
    for row in frame.itertuples(index=False):
        vals = json.loads(row.value_per_level_json)
        values = tuple(np.nan if vals[str(j)] is None else float(vals[str(j)])
                       for j in range(1, len(vals) + 1))
        out.append(policy.PolicyDecision(
            id=str(row.id), criterion=row.criterion, level=int(row.chosen_level),
            dosage=float(row.chosen_dosage), values=values,
            y_r=None if row.y_r == "" else float(row.y_r),
            y_p_hat=None if row.y_p_hat == "" else float(row.y_p_hat)))
    return out


def cvar_values(ws: Workspace, models: dict[int, CateModel]) -> np.ndarray:
    """(m, k) CVaR of bootstrapped effects for the test customers."""
    Xt = ws.X[ws.test]
    ensembles = []
    for level in range(1, ws.k + 1):
        model = models.get(level)
        if model is None:
            ensembles.append(None)
            continue
        ok = model.defined(Xt)
        ens = np.full((ws.cfg.bootstrap, Xt.shape[0]), np.nan)
        if ok.any():
            ens[:, ok] = bootstrap_matrix(
                model.spec, ws.level_state(level).data, Xt[ok], B=ws.cfg.bootstrap,
                seed=role_seed(ws.cfg.seed, SEED_BOOT * 100 + level))
        ensembles.append(ens)
    return policy.cvar_matrix(ensembles, ws.cfg.p, m=Xt.shape[0])


def forward_model(ws: Workspace) -> policy.ForwardModel:
    train = ~ws.test
    dosages = [0.0 if np.isnan(b) else b for b in ws.dosages]
    return policy.fit_forward_model(ws.X[train], ws.levels[train], ws.y[train], dosages,
                                    learner=ws.cfg.forward_spec(),
                                    seed=role_seed(ws.cfg.seed, SEED_FORWARD))


def recommend(ws: Workspace, policies) -> dict[str, list[policy.PolicyDecision]]:
    """Decisions for the test customers under each requested policy."""
    wanted = set(policies)
    ids = ws.test_ids()
    Xt = ws.X[ws.test]
    y_r = ws.frame["ep_m3"].to_numpy(float)[ws.test]
    out = {}
    if wanted & {"cl", "cl-cvar", "cl-cvar-fl"}:
        models = ws.cate_models()
        if "cl" in wanted:
            out["cl"] = policy.recommend_cl(models, Xt, ids, ws.dosages)
        if wanted & {"cl-cvar", "cl-cvar-fl"}:
            cv = policy.recommend_cl_cvar_batch(cvar_values(ws, models), ids, ws.dosages)
            if "cl-cvar" in wanted:
                out["cl-cvar"] = cv
    fm = None
    if wanted & {"cl-cvar-fl", "predict-only"}:
        fm = forward_model(ws)
        if "cl-cvar-fl" in wanted:
            out["cl-cvar-fl"] = policy.recommend_cl_cvar_fl(cv, y_r, fm, Xt)
        if "predict-only" in wanted:
            defined = np.broadcast_to(np.asarray(ws.partition.defined), (len(ids), ws.k))
            out["predict-only"] = policy.recommend_prediction_only(fm, Xt, ids, y_r,
                                                                   defined=defined)
        ws.forward = fm
    return {p: out[p] for p in policies if p in out}


def run_recommend(cfg: PipelineConfig, ws: Workspace | None = None) -> list[Path]:
    ws = ws or Workspace.build(cfg)
    decisions = recommend(ws, cfg.policies)
    paths = [write_decisions(cfg.out_dir / POLICY_FILES[p], d) for p, d in decisions.items()]
    fm = ws.forward
    if fm is not None:
        paths.append(_write_json(cfg.out_dir / "forward_model.json", {
            "rmse": fm.rmse, "target_sd": fm.target_sd, "ratio": fm.ratio,
            "dosages": list(fm.dosages)}))
    return paths


# ----------------------------------------------------------------- evaluate


def evaluate_decisions(frame: pd.DataFrame, decisions: dict, cpp: pd.Series, k: int,
                       truth=None, seed: int = 0) -> dict:
    """Scenario tables, level distributions and, given truth, oracle values.

    ``cpp`` maps customer id to the past policy's level, i.e. the level of
    the observed dosage.
    """
    out = {"policies": {}}
    for name, decs in decisions.items():
        ids = [d.id for d in decs]
        entry = {
            "scenarios": backtest.evaluate(decs, cpp.to_numpy(), frame, ids=cpp.index).to_dict(),
            "distribution": backtest.level_distribution([d.level for d in decs], k),
            "treated_fraction": policy.treated_fraction(decs),
        }
        if truth is not None:
            entry["oracle_value"] = backtest.oracle_policy_value(truth, decs)
        out["policies"][name] = entry
    if decisions:
        ids = [d.id for d in next(iter(decisions.values()))]
        levels = cpp.reindex(ids)
        if levels.isna().any():
            raise datagen.DataError("decision ids missing from the portfolio")
        out["cpp_distribution"] = backtest.level_distribution(levels.to_numpy(int), k)
        out["cpp_treated_fraction"] = float(np.mean(levels.to_numpy(int) > 0))
        if truth is not None:
            out["baselines"] = baseline_values(truth, ids, k, seed)
    return out


def baseline_values(truth, ids, k: int, seed: int) -> dict:
    """Oracle values of always-control, uniformly random and the past policy."""
    sub = truth.select(ids)
    rng = np.random.default_rng([int(seed) % (2**63), SEED_RANDOM])
    rand = rng.integers(0, k + 1, len(ids))
    rows = np.arange(len(ids))
    return {
        "always_control": float(sub.outcomes[:, 0].sum()),
        "uniform_random": float(sub.outcomes[rows, rand].sum()),
        "past_policy": float(sub.outcomes[rows, sub.level].sum()),
        "oracle_best": float(sub.outcomes.max(axis=1).sum()),
    }


def run_evaluate(cfg: PipelineConfig, ws: Workspace | None = None) -> list[Path]:
    ws = ws or Workspace.build(cfg)
    decisions = {}
    for name in cfg.policies:
        path = cfg.out_dir / POLICY_FILES[name]
        if path.exists():
            decisions[name] = read_decisions(path)
    if not decisions:
        decisions = recommend(ws, cfg.policies)
        for p, d in decisions.items():
            write_decisions(cfg.out_dir / POLICY_FILES[p], d)
    truth = datagen.load_truth(cfg.truth_path) if cfg.truth_path.exists() else None
    if truth is not None and truth.k != ws.k:
        # potential outcomes exist only on the generator's own ladder
        truth = None
    cpp = pd.Series(ws.levels, index=pd.Index(ws.frame["id"].astype(str)))
    result = evaluate_decisions(ws.frame, decisions, cpp, ws.k, truth, cfg.seed)
    result["partition"] = ws.partition.to_dict()
    paths = [_write_json(cfg.out_dir / "evaluation.json", result)]
    md = []
    for name, entry in result["policies"].items():
        metrics = backtest.ScenarioMetrics(entry["scenarios"])
        md.append(metrics.to_markdown(f"Scenario evaluation: {name}"))
    paths.append(_write_text(cfg.out_dir / "evaluation.md", "\n".join(md)))
    return paths
