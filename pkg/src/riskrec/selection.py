"""Cross-validated PEHE estimation and per-level model ranking.

For each validation fold, a candidate is refit on the other folds and
scored against a plug-in distribution fitted on the fold itself: random
forests for mu~_0, mu~_1 (grown on the residuals of a linear trend, see
:class:`TrendForest`) and a logistic g~. The plug-in loss is the mean
of (tau^ - tau~)**2; the first-order correction adds the mean of

    2 * (T - g~) / (g~ (1 - g~)) * (Y - mu~_T(x)) * (tau~ - tau^),

which removes the leading bias of the plug-in. Inside the fold the plug-in
predictions are themselves cross-fitted, so each row's residual comes from
models that did not see it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .learners import LearnerSpec, fit_classifier, fit_regressor
from .metalearners import CateMethodSpec, fit_effect_model
from .metalearners.methods import cross_fit_folds, role_seed

MIN_CLASS_ROWS = 30
# the rows were already trimmed to this propensity band
PLUGIN_CLIP = (0.05, 0.95)
PLUGIN_SPLITS = 5


def plugin_learners(seed: int = 0) -> tuple[LearnerSpec, LearnerSpec]:
    return (LearnerSpec.forest(n_trees=30, max_depth=6, min_leaf=5, seed=seed),
            LearnerSpec.logistic(seed=seed))


class TrendForest:
    """Least-squares linear trend plus a forest on its residuals.

    Money-valued outcomes are close to linear in heavy-tailed balance and
    profit columns, which a piecewise-constant forest tracks poorly on a
    single validation fold; the trend absorbs that part.
    """

    def __init__(self, trend, forest):
        self.trend = trend
        self.forest = forest

    @classmethod
    def fit(cls, spec: LearnerSpec, X, y) -> "TrendForest":
        trend = fit_regressor(LearnerSpec.linear(), X, y)
        return cls(trend, fit_regressor(spec, X, y - trend.predict(X)))

    def predict(self, X) -> np.ndarray:
        return self.trend.predict(X) + self.forest.predict(X)


@dataclass(frozen=True)
class PluginDistribution:
    """Plug-in predictions for the rows of one validation fold."""

    tau: np.ndarray
    mu_t: np.ndarray
    g: np.ndarray
    treatment: np.ndarray
    y: np.ndarray

    @classmethod
    def fit(cls, X, t, y, seed: int = 0, outcome: LearnerSpec | None = None,
            propensity: LearnerSpec | None = None, n_splits: int = PLUGIN_SPLITS):
        """Fit mu~_0, mu~_1, g~ on this fold, predicting each half out of sample.

        Raises:
            ValueError: if either arm has fewer than 30 rows.
        """
        X, t, y = np.asarray(X, float), np.asarray(t, float), np.asarray(y, float)
        n1 = int(t.sum())
        n0 = len(t) - n1
        if min(n0, n1) < MIN_CLASS_ROWS:
            raise ValueError(f"validation fold too small for the plug-in: {n0} control and "
                             f"{n1} treated rows, need {MIN_CLASS_ROWS} of each")
        d_out, d_g = plugin_learners(seed)
        outcome, propensity = outcome or d_out, propensity or d_g
        split = cross_fit_folds(t, n_splits, seed)
        mu0, mu1, g = (np.empty(len(y)) for _ in range(3))
        for s in range(n_splits):
            test, train = split == s, split != s
            c, tr = train & (t == 0), train & (t == 1)
            mu0[test] = TrendForest.fit(outcome.with_seed(role_seed(seed, 30 + s)),
                                        X[c], y[c]).predict(X[test])
            mu1[test] = TrendForest.fit(outcome.with_seed(role_seed(seed, 40 + s)),
                                        X[tr], y[tr]).predict(X[test])
            g[test] = fit_classifier(propensity.with_seed(role_seed(seed, 50 + s)),
                                     X[train], t[train]).predict(X[test])
        g = np.clip(g, *PLUGIN_CLIP)
        return cls(tau=mu1 - mu0, mu_t=np.where(t == 1, mu1, mu0), g=g, treatment=t, y=y)

    def plugin_loss(self, tau_hat) -> float:
        return float(np.mean((np.asarray(tau_hat) - self.tau) ** 2))

    def correction(self, tau_hat) -> float:
        w = 2.0 * (self.treatment - self.g) / (self.g * (1.0 - self.g))
        return float(np.mean(w * (self.y - self.mu_t) * (self.tau - np.asarray(tau_hat))))

    def loss(self, tau_hat, correction_order: int = 1) -> float:
        if correction_order not in (0, 1):
            raise ValueError("correction_order must be 0 or 1")
        loss = self.plugin_loss(tau_hat)
        return loss + self.correction(tau_hat) if correction_order else loss


def pehe_loss(tau_hat, X, t, y, correction_order: int = 1, seed: int = 0) -> float:
    """Estimated PEHE (squared scale) of arbitrary predictions on one sample."""
    return PluginDistribution.fit(X, t, y, seed).loss(tau_hat, correction_order)


def _root(loss) -> np.ndarray:
    return np.sqrt(np.maximum(loss, 0.0))


@dataclass(frozen=True)
class PeheEstimate:
    """Cross-validated PEHE of one candidate.

    ``plugin_losses`` and ``corrected_losses`` hold the per-fold squared
    losses of both variants, computed from the same fits. ``mean`` is the
    square root of the fold-averaged loss (negative averages clamp to 0) and
    ``sd`` the spread of the per-fold roots, both for ``correction_order``.
    ``true_losses`` is filled only when the true effects were supplied.
    """

    name: str
    correction_order: int
    plugin_losses: np.ndarray
    corrected_losses: np.ndarray
    true_losses: np.ndarray | None = None
    debiased_losses: np.ndarray | None = None

    @property
    def losses(self) -> np.ndarray:
        return self.corrected_losses if self.correction_order else self.plugin_losses

    @property
    def per_fold(self) -> np.ndarray:
        return _root(self.losses)

    @property
    def mean(self) -> float:
        return float(_root(self.loss_mean))

    @property
    def loss_mean(self) -> float:
        """Fold-averaged squared loss before clamping; may be negative."""
        return float(np.mean(self.losses))

    @property
    def sd(self) -> float:
        roots = self.per_fold
        return float(np.std(roots, ddof=1)) if len(roots) > 1 else 0.0

    def order(self, correction_order: int) -> "PeheEstimate":
        return replace(self, correction_order=correction_order)

    @property
    def true_mean(self) -> float | None:
        if self.true_losses is None:
            return None
        return float(np.sqrt(np.mean(self.true_losses)))

    @property
    def debiased_mean(self) -> float | None:
        if self.debiased_losses is None:
            return None
        return float(_root(np.mean(self.debiased_losses)))


class FoldPlan:
    """Validation folds and their plug-in fits, shared by all candidates."""

    def __init__(self, data, n_folds: int = 5, seed: int = 0):
        if n_folds < 2:
            raise ValueError("folds must be >= 2")
        self.data = data
        self.n_folds = n_folds
        self.seed = seed
        self.fold = cross_fit_folds(data.treatment, n_folds, role_seed(seed, 60))
        self._plugins: dict[int, PluginDistribution] = {}

    def rows(self, k: int) -> np.ndarray:
        return self.fold == k

    def plugin(self, k: int) -> PluginDistribution:
        if k not in self._plugins:
            v = self.rows(k)
            d = self.data
            self._plugins[k] = PluginDistribution.fit(d.X[v], d.treatment[v], d.y[v],
                                                      seed=role_seed(self.seed, 70 + k))
        return self._plugins[k]


def _bootstrap_debiased(plugin_fit, X, t, y, tau_hat, n_boot, seed) -> float:
    """Order-1 estimate minus its bootstrap bias (plug-in refit per resample)."""
    base = plugin_fit.loss(tau_hat, 1)
    n = len(y)
    reps = []
    for b in range(n_boot):
        for attempt in range(11):
            rng = np.random.default_rng([int(seed) % (2**63), b, attempt])
            idx = rng.integers(0, n, n)
            tb = t[idx]
            if min(tb.sum(), n - tb.sum()) >= MIN_CLASS_ROWS:
                break
        else:
            raise ValueError("bootstrap resamples of the fold keep losing an arm")
        pb = PluginDistribution.fit(X[idx], tb, y[idx], seed=role_seed(seed, 80 + b))
        reps.append(pb.loss(tau_hat[idx], 1))
    return 2.0 * base - float(np.mean(reps))


def estimate_pehe(spec: CateMethodSpec, data, folds: int = 5, correction_order: int = 1,
                  seed: int = 0, plan: FoldPlan | None = None, true_effect=None,
                  debias_bootstrap: int = 0) -> PeheEstimate:
    """Cross-validated sqrt-PEHE of ``spec`` on an overlap dataset.

    Args:
        spec: candidate method; refit on the complement of every fold.
        data: rows with ``X``, ``treatment``, ``y``.
        folds: number of validation folds (ignored when ``plan`` is given).
        correction_order: 0 for the pure plug-in loss, 1 to add the
            first-order influence-function correction.
        seed: fold and plug-in seed.
        plan: precomputed folds and plug-ins, to share across candidates.
        true_effect: optional true effects aligned with ``data`` rows; fills
            ``true_per_fold``.
        debias_bootstrap: if positive, also compute the bootstrap-debiased
            order-1 estimate with that many plug-in refits per fold (an
            experimental stand-in for higher-order corrections).

    Raises:
        ValueError: when a fold has fewer than 30 rows of either arm.
    """
    if correction_order not in (0, 1):
        raise ValueError("correction_order must be 0 or 1")
    plan = plan or FoldPlan(data, folds, seed)
    plugin, corrected, truth, debiased = [], [], [], []
    for k in range(plan.n_folds):
        v = plan.rows(k)
        p = plan.plugin(k)
        tr = ~v
        model = fit_effect_model(spec, data.X[tr], data.treatment[tr], data.y[tr],
                                 seed=role_seed(spec.seed, 90 + k))
        tau_hat = model.effect(data.X[v])
        plugin.append(p.loss(tau_hat, 0))
        corrected.append(p.loss(tau_hat, 1))
        if true_effect is not None:
            err = tau_hat - np.asarray(true_effect, dtype=float)[v]
            truth.append(float(np.mean(err ** 2)))
        if debias_bootstrap > 0:
            debiased.append(_bootstrap_debiased(
                p, data.X[v], data.treatment[v], data.y[v], tau_hat, debias_bootstrap,
                role_seed(plan.seed, 100 + k)))
    return PeheEstimate(
        name=spec.name, correction_order=correction_order,
        plugin_losses=np.array(plugin), corrected_losses=np.array(corrected),
        true_losses=np.array(truth) if true_effect is not None else None,
        debiased_losses=np.array(debiased) if debias_bootstrap > 0 else None)


def rank(estimates: list[PeheEstimate]) -> list[int]:
    """Candidate indices, best first.

    Sorted by the unclamped mean squared loss, which orders positive
    estimates exactly as their roots do and still separates candidates
    whose roots clamp to 0; then by SD, then by position.
    """
    return sorted(range(len(estimates)),
                  key=lambda i: (estimates[i].loss_mean, estimates[i].sd, i))


@dataclass
class SelectionReport:
    """Estimated sqrt-PEHE (mean, SD over folds) per level and candidate."""

    candidates: list[CateMethodSpec]
    estimates: dict[int, list[PeheEstimate]] = field(default_factory=dict)
    errors: dict[int, str] = field(default_factory=dict)

    def ranking(self, level: int) -> list[int]:
        return rank(self.estimates[level])

    def chosen(self, level: int) -> CateMethodSpec | None:
        if level not in self.estimates:
            return None
        return self.candidates[self.ranking(level)[0]]

    @property
    def levels(self) -> list[int]:
        return sorted(set(self.estimates) | set(self.errors))

    def to_dict(self) -> dict:
        out = {"candidates": [c.to_dict() for c in self.candidates], "levels": {}}
        for level in self.levels:
            if level in self.errors:
                out["levels"][str(level)] = {"error": self.errors[level]}
                continue
            ests = self.estimates[level]
            out["levels"][str(level)] = {
                "chosen": self.chosen(level).name,
                "ranking": [ests[i].name for i in self.ranking(level)],
                "results": [{"method": e.name, "mean": e.mean, "sd": e.sd,
                             "loss_mean": e.loss_mean,
                             "per_fold": e.per_fold.tolist(),
                             "plugin_mean": e.order(0).mean} for e in ests],
            }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_markdown(self) -> str:
        levels = self.levels
        head = "| Method | " + " | ".join(f"Level {j}" for j in levels) + " |"
        rule = "|---|" + "---|" * len(levels)
        lines = [head, rule]
        for i, cand in enumerate(self.candidates):
            cells = []
            for level in levels:
                if level in self.errors:
                    cells.append("n/a")
                    continue
                e = self.estimates[level][i]
                mark = "**" if self.ranking(level)[0] == i else ""
                cells.append(f"{mark}{e.mean:.3f} ± {e.sd:.3f}{mark}")
            lines.append(f"| {cand.name} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"


def select_model(candidates: list[CateMethodSpec], data, folds: int = 5,
                 correction_order: int = 1, seed: int = 0, level: int | None = None,
                 report: SelectionReport | None = None) -> SelectionReport:
    """Estimate every candidate on shared folds and rank them for one level."""
    if len(candidates) < 2:
        raise ValueError("select_model needs at least 2 candidates")
    level = data.level if level is None else level
    report = report or SelectionReport(list(candidates))
    plan = FoldPlan(data, folds, seed)
    report.estimates[level] = [estimate_pehe(c, data, correction_order=correction_order,
                                             plan=plan) for c in candidates]
    return report
