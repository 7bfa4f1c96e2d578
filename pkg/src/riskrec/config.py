"""Pipeline configuration: a JSON document plus command-line overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .datagen import GenConfig
from .learners import LearnerSpec
from .metalearners import CateMethodSpec, default_candidates
from .risk import DEFAULT_B, DEFAULT_P
from .treatments import DEFAULT_TRIM_EPS

POLICIES = ("cl", "cl-cvar", "cl-cvar-fl", "predict-only")


class ConfigError(ValueError):
    """Invalid or incomplete configuration; the message names the key."""


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a pipeline run depends on.

    Paths are resolved relative to the working directory. ``portfolio``
    defaults to ``<out>/portfolio.csv`` and ``truth`` to its sibling
    ``.truth.csv`` file. ``cut_points`` defaults to the generator's.
    """

    out: str = "out"
    portfolio: str | None = None
    truth: str | None = None
    seed: int = 0
    generator: dict = field(default_factory=dict)
    cut_points: tuple[float, ...] | None = None
    trim_eps: float = DEFAULT_TRIM_EPS
    propensity: dict = field(default_factory=lambda: LearnerSpec.logistic().to_dict())
    candidates: list | None = None
    folds: int = 5
    correction_order: int = 1
    bootstrap: int = DEFAULT_B
    p: float = DEFAULT_P
    policies: tuple[str, ...] = POLICIES
    test_fraction: float = 0.5
    forward: dict | None = None
    lgd: float | None = None
    ccf: float | None = None
    defaulters: str | None = None

    def __post_init__(self):
        if self.cut_points is not None:
            object.__setattr__(self, "cut_points", tuple(float(c) for c in self.cut_points))
        object.__setattr__(self, "policies", tuple(self.policies))
        self.validate()

    def validate(self) -> None:
        if not 0 <= self.trim_eps < 0.5:
            raise ConfigError(f"trim_eps: must lie in [0, 0.5), got {self.trim_eps}")
        if self.folds < 2:
            raise ConfigError(f"folds: must be >= 2, got {self.folds}")
        if self.correction_order not in (0, 1):
            raise ConfigError(f"correction_order: must be 0 or 1, got {self.correction_order}")
        if self.bootstrap < 1:
            raise ConfigError(f"bootstrap: must be >= 1, got {self.bootstrap}")
        if not 0 < self.p < 1:
            raise ConfigError(f"p: must lie in (0, 1), got {self.p}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError(f"test_fraction: must lie in (0, 1), got {self.test_fraction}")
        bad = [p for p in self.policies if p not in POLICIES]
        if bad or not self.policies:
            raise ConfigError(f"policies: unknown policy {bad[0] if bad else None!r}; "
                              f"choose from {POLICIES}")
        for key in ("lgd", "ccf"):
            v = getattr(self, key)
            if v is not None and not 0 <= v <= 1:
                raise ConfigError(f"{key}: must lie in [0, 1], got {v}")
        try:
            self.gen_config()
            self.candidate_specs()
            self.propensity_spec()
            self.forward_spec()
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    # ------------------------------------------------------------ resolved

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def portfolio_path(self) -> Path:
        return Path(self.portfolio) if self.portfolio else self.out_dir / "portfolio.csv"

    @property
    def truth_path(self) -> Path:
        from .datagen import truth_path
        return Path(self.truth) if self.truth else truth_path(self.portfolio_path)

    def gen_config(self) -> GenConfig:
        data = {"seed": self.seed, **self.generator}
        if self.lgd is not None:
            data.setdefault("lgd", self.lgd)
        if self.ccf is not None:
            data.setdefault("ccf", self.ccf)
        try:
            return GenConfig.from_dict(data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"generator: {exc}") from None

    def resolved_cut_points(self) -> tuple[float, ...]:
        return self.cut_points if self.cut_points is not None else self.gen_config().cut_points

    def candidate_specs(self) -> list[CateMethodSpec]:
        if self.candidates is None:
            return default_candidates(self.seed)
        try:
            specs = [CateMethodSpec.from_dict(c) for c in self.candidates]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"candidates: {exc}") from None
        if len(specs) < 2:
            raise ConfigError("candidates: need at least 2 candidate methods")
        return specs

    def propensity_spec(self) -> LearnerSpec:
        try:
            return LearnerSpec.from_dict(self.propensity)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"propensity: {exc}") from None

    def forward_spec(self) -> LearnerSpec | None:
        if self.forward is None:
            return None
        try:
            return LearnerSpec.from_dict(self.forward)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"forward: {exc}") from None

    # -------------------------------------------------------- serialisation

    def to_dict(self) -> dict:
        out = asdict(self)
        out["policies"] = list(self.policies)
        if self.cut_points is not None:
            out["cut_points"] = list(self.cut_points)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"{unknown[0]}: unknown configuration key")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config: file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: {path} is not valid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a JSON object")
        return cls.from_dict(data)

    def override(self, **kw) -> "PipelineConfig":
        """Copy with the non-None keyword values replaced."""
        changes = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **changes) if changes else self
