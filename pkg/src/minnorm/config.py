"""Run configuration for the CLI commands (YAML or JSON).

Unknown keys are rejected, and every seed must be given explicitly. Relative
paths resolve against the directory of the config file.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import InputError
from .features import ColumnSpec, ExpansionPlan
from .synth import SolverSettings


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridRange(_Strict):
    start: int = Field(1, ge=1)
    stop: int = Field(..., ge=1)
    step: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _ordered(self):
        if self.stop < self.start:
            raise ValueError("grid stop must be >= start")
        return self

    def values(self) -> list[int]:
        return list(range(self.start, self.stop + 1, self.step))


Grid = Optional[Union[list[int], GridRange]]


def grid_values(grid: Grid, upper: int) -> list[int]:
    if grid is None:
        return list(range(1, upper + 1))
    return grid.values() if isinstance(grid, GridRange) else list(grid)


class ColumnConfig(_Strict):
    name: str
    kind: Literal["continuous", "discrete", "dummy"]
    group: Optional[str] = None

    def spec(self) -> ColumnSpec:
        return ColumnSpec(self.name, self.kind, self.group)


class PlanConfig(_Strict):
    bins_per_continuous: int = Field(50, ge=2)
    jitter_sd: float = Field(0.0, ge=0.0)
    intercept: bool = True
    interactions: bool = True


class ExpandSeeds(_Strict):
    jitter: int


class ExpandConfig(_Strict):
    input: Path
    eval_input: Optional[Path] = None
    outcome: str
    columns: list[ColumnConfig] = Field(..., min_length=1)
    plan: PlanConfig = PlanConfig()
    seeds: ExpandSeeds
    output_dir: Optional[Path] = None

    def expansion_plan(self) -> ExpansionPlan:
        return ExpansionPlan(
            bins_per_continuous=self.plan.bins_per_continuous,
            jitter_sd=self.plan.jitter_sd,
            jitter_seed=self.seeds.jitter,
            intercept=self.plan.intercept,
            interactions=self.plan.interactions,
        )


class EvalConfig(_Strict):
    m: list[int] = Field([1], min_length=1)
    num_draws: int = Field(1000, ge=1)

    @field_validator("m")
    @classmethod
    def _positive(cls, v):
        if any(x < 1 for x in v):
            raise ValueError("subset sizes m must be >= 1")
        if len(set(v)) != len(v):
            raise ValueError("subset sizes m must be distinct")
        return v


class OlsSeeds(_Strict):
    ordering: int
    eval_draws: int


class OlsCurveConfig(_Strict):
    train: Path
    eval: Path
    outcome: str = "y"
    intercept_column: Optional[str] = None
    grid: Grid = None
    orderings: int = Field(5, ge=1)
    evaluation: EvalConfig = EvalConfig()
    seeds: OlsSeeds
    rank_tol: float = Field(1e-10, ge=0.0, lt=1.0)
    output_dir: Optional[Path] = None


class SolverConfig(_Strict):
    opt_tol: float = Field(1e-8, gt=0.0)
    max_iter: int = Field(500, ge=1)
    path: list[float] = [1e-2, 1e-4, 1e-6, 1e-8]
    path_tol: float = Field(1e-6, gt=0.0)

    def settings(self) -> SolverSettings:
        return SolverSettings(self.opt_tol, self.max_iter, tuple(self.path), self.path_tol)


class PanelConfig(_Strict):
    path: Path
    format: Literal["wide", "long"] = "wide"
    target: str
    T: int = Field(..., ge=1)
    S: int = Field(0, ge=0)
    unit_col: str = "unit"
    period_col: str = "period"
    value_col: str = "value"
    donors: Optional[list[str]] = None
    first_period: Optional[str] = None


class ScSeeds(_Strict):
    subset_sampling: int


class ScCurveConfig(_Strict):
    panel: PanelConfig
    grid: Grid = None
    cap: int = Field(10_000, ge=1)
    seeds: ScSeeds
    solver: SolverConfig = SolverConfig()
    output_dir: Optional[Path] = None


class VerifyCounts(_Strict):
    prop1: int = Field(1000, ge=1)
    prop2: int = Field(1000, ge=1)
    prop3: int = Field(1000, ge=1)
    prop4: int = Field(500, ge=1)
    qp: int = Field(200, ge=1)
    tiebreak: int = Field(50, ge=1)


class VerifySeeds(_Strict):
    suites: int


class VerifyConfig(_Strict):
    counts: VerifyCounts = VerifyCounts()
    mc_draws: int = Field(100_000, ge=0)
    rank_deficient: bool = False
    seeds: VerifySeeds
    solver: SolverConfig = SolverConfig()
    output_dir: Optional[Path] = None


MODELS = {
    "expand-features": ExpandConfig,
    "ols-curve": OlsCurveConfig,
    "sc-curve": ScCurveConfig,
    "verify": VerifyConfig,
}


def _format_errors(exc: ValidationError, source) -> str:
    lines = [f"invalid config {source}:"]
    for e in exc.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        if e["type"] == "extra_forbidden":
            lines.append(f"  {loc}: unknown key")
        else:
            lines.append(f"  {loc}: {e['msg']}")
    return "\n".join(lines)


def parse_config(command: str, doc: dict, base_dir: Path | None = None, seed_override: int | None = None):
    """Validate ``doc`` against the model for ``command``."""
    if command not in MODELS:
        raise InputError(f"unknown command {command!r}")
    if not isinstance(doc, dict):
        raise InputError("config document must be a mapping")
    if seed_override is not None:
        # every purpose keeps its own generator, all seeded with the override
        seeds = doc.get("seeds")
        if isinstance(seeds, dict):
            doc = {**doc, "seeds": {k: seed_override for k in seeds}}
    try:
        cfg = MODELS[command].model_validate(doc)
    except ValidationError as exc:
        raise InputError(_format_errors(exc, f"for {command}")) from None
    if base_dir is not None:
        cfg = _rebase(cfg, Path(base_dir))
    return cfg


def _rebase(model: BaseModel, base: Path) -> BaseModel:
    updates = {}
    for name in type(model).model_fields:
        v = getattr(model, name)
        if isinstance(v, Path) and not v.is_absolute():
            updates[name] = base / v
        elif isinstance(v, BaseModel):
            updates[name] = _rebase(v, base)
    return model.model_copy(update=updates) if updates else model


def load_config(command: str, path, seed_override: int | None = None):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    text = path.read_text()
    try:
        doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise InputError(f"cannot parse config {path}: {exc}") from None
    return parse_config(command, doc or {}, path.parent, seed_override)
