"""Method specifications and the default candidate list."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..learners import LearnerSpec

METHODS = ("direct", "two_model", "causal_tree", "x_learner", "r_learner",
           "causal_forest_dml")

CROSS_FITTED = ("r_learner", "causal_forest_dml")


def _light_forest(**kw) -> LearnerSpec:
    return LearnerSpec.forest(**{"n_trees": 20, "max_depth": 5, "min_leaf": 10, **kw})


@dataclass(frozen=True)
class CateMethodSpec:
    """One effect estimator and the base learner used in each role.

    Roles, by method:

    * ``direct``: ``outcome`` is the single model over (x, T).
    * ``two_model``: ``outcome`` for both mu_0 and mu_1.
    * ``causal_tree``: ``effect`` carries max_depth/min_leaf of the tree.
    * ``x_learner``: ``outcome`` for mu_0/mu_1, ``effect`` for tau_0/tau_1,
      ``propensity`` for the weighting g.
    * ``r_learner``: ``outcome`` for m(x) = E[Y|x], ``propensity`` for g,
      ``effect`` for the weighted final stage.
    * ``causal_forest_dml``: like ``r_learner``; ``effect`` must be a forest
      whose trees split on effect heterogeneity; ``subsample`` is the
      fraction of rows drawn without replacement for each tree.
    """

    method: str
    outcome: LearnerSpec = field(default_factory=LearnerSpec.linear)
    effect: LearnerSpec | None = None
    propensity: LearnerSpec = field(default_factory=LearnerSpec.logistic)
    cross_fit_folds: int = 5
    subsample: float = 0.5
    seed: int = 0
    label: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.method in CROSS_FITTED and self.cross_fit_folds < 2:
            raise ValueError("cross_fit_folds must be >= 2")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must lie in (0, 1]")
        if self.effect is None:
            default = {
                "causal_tree": LearnerSpec.tree(max_depth=4, min_leaf=25),
                "causal_forest_dml": _light_forest(min_leaf=10),
            }.get(self.method, self.outcome)
            object.__setattr__(self, "effect", default)
        if self.method == "causal_forest_dml" and self.effect.kind != "forest":
            raise ValueError("causal_forest_dml needs a forest effect learner")

    @property
    def name(self) -> str:
        return self.label or self.method

    def with_seed(self, seed: int) -> "CateMethodSpec":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        out = {"method": self.method, "label": self.name,
               "outcome": self.outcome.to_dict(), "effect": self.effect.to_dict(),
               "propensity": self.propensity.to_dict(), "seed": self.seed}
        if self.method in CROSS_FITTED:
            out["cross_fit_folds"] = self.cross_fit_folds
        if self.method == "causal_forest_dml":
            out["subsample"] = self.subsample
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CateMethodSpec":
        data = dict(data)
        for role in ("outcome", "effect", "propensity"):
            if isinstance(data.get(role), dict):
                data[role] = LearnerSpec.from_dict(data[role])
        return cls(**data)


def default_candidates(seed: int = 0) -> list[CateMethodSpec]:
    """The candidate set compared per level by default.

    Forests are kept light (20 trees, depth 5) so that bootstrap refits of
    the winner stay affordable.
    """
    rf = _light_forest(seed=seed)
    return [
        CateMethodSpec("direct", LearnerSpec.linear(), seed=seed, label="OLS/L1"),
        CateMethodSpec("two_model", LearnerSpec.linear(), seed=seed, label="OLS/L2"),
        CateMethodSpec("causal_tree", effect=LearnerSpec.tree(max_depth=4, min_leaf=25),
                       seed=seed, label="Causal Tree"),
        CateMethodSpec("two_model", rf, seed=seed, label="T-RF"),
        CateMethodSpec("x_learner", rf, effect=rf, seed=seed, label="X-RF"),
        CateMethodSpec("r_learner", LearnerSpec.linear(), effect=rf, seed=seed,
                       label="R-RF"),
        CateMethodSpec("causal_forest_dml", LearnerSpec.linear(), effect=rf, seed=seed,
                       label="Causal Forest DML"),
    ]
