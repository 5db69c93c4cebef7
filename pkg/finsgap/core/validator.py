"""
Check ledger — numbered verdicts against declared tolerances.

Every experiment records what it measured as a Check (value, tolerance,
comparison). A RunReport passes exactly when each of its checks does.
"""
from __future__ import annotations
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

COMPARISONS = ("le", "ge", "abs_le", "at_least")


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    # le: value ≤ tol, ge: value ≥ −tol, abs_le: |value| ≤ tol, at_least: value ≥ tol
    comparison: str = "le"
    detail: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        if self.comparison == "ge":
            return self.value >= -self.tolerance
        if self.comparison == "at_least":
            return self.value >= self.tolerance
        if self.comparison == "abs_le":
            return abs(self.value) <= self.tolerance
        return self.value <= self.tolerance

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance,
                "comparison": self.comparison, "passed": self.passed, **self.detail}


class CheckLedger:
    """Collects checks as an experiment runs."""

    def __init__(self):
        self.checks: List[Check] = []

    def record(self, name: str, value: float, tolerance: float, comparison: str = "le",
               **detail) -> Check:
        if comparison not in COMPARISONS:
            raise ValueError(f"unknown comparison {comparison!r}")
        check = Check(name, float(value), float(tolerance), comparison, detail)
        self.checks.append(check)
        return check

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> List[Check]:
        return [c for c in self.checks if not c.passed]

    def summary(self) -> Dict[str, Any]:
        if not self.checks:
            return {"status": "no_checks"}
        return {
            "total": len(self.checks),
            "failed": len(self.failures()),
            "passed": self.passed,
        }


@dataclass
class RunReport:
    config: Dict[str, Any]
    checks: List[Check] = field(default_factory=list)
    results: Dict[str, Any] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)
    wall_time_s: float = 0.0
    generated_at: str = ""
    error: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks)

    @property
    def exit_code(self) -> int:
        if self.error is not None:
            return 1
        return 0 if self.passed else 2

    def stamp(self, wall_time_s: float) -> None:
        self.wall_time_s = float(wall_time_s)
        self.generated_at = datetime.now(timezone.utc).isoformat(timespec="seconds")

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "config": self.config,
            "checks": [c.to_dict() for c in self.checks],
            "passed": self.passed,
            "results": self.results,
            "artifacts": sorted(self.artifacts),
            "timing": {"generated_at": self.generated_at, "wall_time_s": self.wall_time_s},
        }
        if self.error is not None:
            out["error"] = self.error
        return out
