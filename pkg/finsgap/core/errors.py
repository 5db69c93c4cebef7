"""
Errors — the failure kinds of the laboratory.

Every operation raises one of these; callers branch on the class, never on
message text. Payloads carry whatever the caller needs to keep going
(best value, partial trajectory, stage name).
"""
from __future__ import annotations
from typing import Any, Dict, Optional, Sequence


class FinsgapError(Exception):
    """Root of all laboratory errors."""


class InvalidArgument(FinsgapError, ValueError):
    """An argument lies outside the operation's domain."""


class ConfigError(InvalidArgument):
    """An experiment configuration failed schema validation."""

    def __init__(self, message: str, field: str = "", line: Optional[int] = None,
                 column: Optional[int] = None):
        location = field or "<document>"
        if line is not None:
            location += f" (line {line}, column {column})"
        super().__init__(f"{location}: {message}")
        self.field = field
        self.line = line
        self.column = column


class ModelDegenerate(FinsgapError):
    """The Finsler structure lost positivity or strong convexity."""

    def __init__(self, message: str, point: Any = None, direction: Any = None):
        super().__init__(message)
        self.point = point
        self.direction = direction


class ZeroSection(FinsgapError):
    """Tensor, Legendre or connection data requested at a zero vector."""

    def __init__(self, message: str = "undefined on the zero section", point: Any = None):
        super().__init__(message)
        self.point = point


class NumericalFailure(FinsgapError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message: str, best: Any = None,
                 residuals: Optional[Dict[str, float]] = None, iterate: Any = None):
        super().__init__(message)
        self.best = best
        self.residuals = residuals or {}
        self.iterate = iterate


class DomainExit(FinsgapError):
    """A trajectory or curve left the chart domain."""

    def __init__(self, message: str, partial: Any = None):
        super().__init__(message)
        self.partial = partial


class InvalidDecomposition(FinsgapError):
    """A needle decomposition violates the transport-ray or support invariant."""

    def __init__(self, message: str, ray: Optional[int] = None, residual: float = 0.0):
        super().__init__(message)
        self.ray = ray
        self.residual = residual


class StageFailure(FinsgapError):
    """A corollary pipeline stage exceeded its tolerance."""

    def __init__(self, stage: str, value: float, tolerance: float,
                 stages: Sequence[Any] = ()):
        super().__init__(f"stage '{stage}' failed: {value:.3e} > {tolerance:.3e}")
        self.stage = stage
        self.value = value
        self.tolerance = tolerance
        self.stages = list(stages)
