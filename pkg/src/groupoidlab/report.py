"""Check results, suite reports and their JSON serialization."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_residual: float
    tolerance: float
    sample_count: int = 1

    @property
    def passed(self) -> bool:
        # NaN residuals fail.
        return bool(self.max_residual <= self.tolerance)

    @classmethod
    def of(cls, name: str, residuals, tolerance: float) -> "CheckResult":
        r = np.asarray(residuals, dtype=float).ravel()
        if r.size == 0:
            raise ValueError(f"check {name!r} has no samples")
        worst = float(np.nan if np.isnan(r).any() else np.max(r))
        return cls(name, worst, float(tolerance), int(r.size))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "sample_count": self.sample_count,
        }


@dataclass
class SuiteReport:
    suite: str
    checks: list[CheckResult] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)
    aborted: str | None = None

    @property
    def passed(self) -> bool:
        return self.aborted is None and all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "pass": self.passed,
            "aborted": self.aborted,
            "checks": [c.to_dict() for c in self.checks],
            "meta": self.meta,
        }


def _format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    text = f"{x:.17g}"
    if not any(c in text for c in ".eE"):
        text += ".0"
    return text


def dumps(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits.

    The stdlib encoder always uses ``float.__repr__``; this walker only
    handles the plain containers reports are made of.
    """
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        if not seq:
            return "[]"
        items = [pad + dumps(v, indent, _level + 1) for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")
