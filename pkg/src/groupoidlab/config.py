"""Run configuration: a strict JSON document validated with pydantic."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError
from .numerics import DEFAULT_TOLERANCES as _D, NumericTolerances
from .suites import SUITES

SuiteName = Literal["fields", "oneform", "groupoid", "calabi", "generating", "critical"]


class TolerancesModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    fd_step: float = Field(_D.fd_step, gt=0)
    newton_tol: float = Field(_D.newton_tol, gt=0)
    newton_max_iter: int = Field(_D.newton_max_iter, ge=1)
    quad_order: int = Field(_D.quad_order, ge=2)
    match_tol: float = Field(_D.match_tol, gt=0)
    check_tol: float = Field(_D.check_tol, gt=0)
    hess_step: float = Field(_D.hess_step, gt=0)

    def build(self) -> NumericTolerances:
        return NumericTolerances(**self.model_dump())


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    family: str
    family_params: list[float] = Field(default_factory=list)
    m: int = Field(1, ge=1)
    box_radius: float = Field(1.0, gt=0)
    fiber_radius: Optional[float] = Field(None, gt=0)
    tolerances: TolerancesModel = Field(default_factory=TolerancesModel)
    samples: int = Field(20, ge=1)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    suites: list[SuiteName] = Field(default_factory=lambda: list(SUITES), min_length=1)
    n_cycle_sizes: list[int] = Field(default_factory=lambda: [2, 3, 4, 5], min_length=1)

    @field_validator("n_cycle_sizes")
    @classmethod
    def _cycle_sizes(cls, v: list[int]) -> list[int]:
        if any(n < 2 for n in v):
            raise ValueError("cycle sizes must be >= 2")
        return v

    @field_validator("suites")
    @classmethod
    def _unique_suites(cls, v: list[str]) -> list[str]:
        # Run order is fixed by SUITES regardless of listing order.
        return [s for s in SUITES if s in set(v)]

    def numeric_tolerances(self) -> NumericTolerances:
        return self.tolerances.build()


def parse_config(data) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        lines = [f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in exc.errors()]
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines)) from None


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(data)
