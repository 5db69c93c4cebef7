"""
Σ factors — flat compact cross-sections for split products Σ × (ℝ, γ_K).

Circle(L):          ℝ/Lℤ with the Euclidean norm and uniform m_Σ.
MinkowskiTorus(L):  (ℝ/Lℤ)^k with a reversible quartic Minkowski norm, Berwald with Γ ≡ 0.

Both carry uniform probability measure, Ric_Σ = 0, and the first nonzero
eigenvalue (or a lower bound for it) that decides whether the ℝ factor
carries λ₁ of the product.
"""
from __future__ import annotations
from typing import Dict, Tuple

import numpy as np

from ..core.errors import InvalidArgument
from ..core.norms import FinslerModel, unit_directions
from .minkowski import quartic_minkowski
from .riemannian import euclidean


class Circle:
    """The circle of circumference L, λ₁(Σ) = (2π/L)²."""

    def __init__(self, length: float = 2.0 * np.pi):
        if not length > 0:
            raise InvalidArgument("circle length must be positive")
        self.length = float(length)
        self.model: FinslerModel = euclidean(1)

    @property
    def dim(self) -> int:
        return 1

    @property
    def periods(self) -> Tuple[float, ...]:
        return (self.length,)

    @property
    def reversible(self) -> bool:
        return True

    def spectral_gap(self) -> float:
        return (2.0 * np.pi / self.length) ** 2

    def describe(self) -> Dict:
        return {"factor": "circle", "length": self.length, "gap": self.spectral_gap()}


class MinkowskiTorus:
    """
    Flat torus (ℝ/Lℤ)^k under F(v) = |v| + c·(Σ v_i⁴)^{1/4}.

    With C = max F on the Euclidean unit sphere, F*(α) ≥ |α|/C, so the
    Rayleigh quotient dominates (2π/L)²/C²: that is the gap we certify.
    """

    def __init__(self, length: float = 2.0 * np.pi, weight: float = 0.2, dim: int = 2):
        if not length > 0:
            raise InvalidArgument("torus length must be positive")
        self.length = float(length)
        self.weight = float(weight)
        self._dim = int(dim)
        self.model: FinslerModel = quartic_minkowski(self._dim, weight)
        dirs = unit_directions(self._dim, 720)
        self._max_unit_norm = float(np.max(self.model.norm(np.zeros_like(dirs), dirs)))

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def periods(self) -> Tuple[float, ...]:
        return (self.length,) * self._dim

    @property
    def reversible(self) -> bool:
        return True

    def spectral_gap(self) -> float:
        return (2.0 * np.pi / self.length) ** 2 / self._max_unit_norm ** 2

    def describe(self) -> Dict:
        return {"factor": "minkowski_torus", "length": self.length, "weight": self.weight,
                "dim": self._dim, "gap": self.spectral_gap()}
