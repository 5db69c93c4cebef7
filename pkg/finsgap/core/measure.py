"""
Weighted measures — m = e^{−ψ(x)} dx¹…dxⁿ on a chart.

The curvature operations work with Ψ = ψ + ½ log det g_V, the density of m
against vol_{g_V}; that correction is taken where V is known, not here.
"""
from __future__ import annotations
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidArgument

PointFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class WeightedMeasure:
    dim: int
    psi: PointFn
    domain: Tuple[Tuple[float, float], ...] = ()
    normalized: bool = False
    psi_dx: Optional[PointFn] = None      # ∂_k ψ, shape (..., n)
    name: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.domain:
            object.__setattr__(self, "domain", tuple((-np.inf, np.inf) for _ in range(self.dim)))

    def log_density(self, x) -> np.ndarray:
        return np.asarray(self.psi(np.asarray(x, dtype=float)), dtype=float)

    def density(self, x) -> np.ndarray:
        return np.exp(-self.log_density(x))

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.psi_dx is not None:
            return np.asarray(self.psi_dx(x), dtype=float)
        h = (1e-5 * (1.0 + np.linalg.norm(x, axis=-1)))[..., None, None]
        eye = np.eye(self.dim)
        plus = self.log_density(x[..., None, :] + h * eye)
        minus = self.log_density(x[..., None, :] - h * eye)
        return (plus - minus) / (2.0 * h[..., 0])

    def mass(self, grid) -> float:
        """∫ e^{−ψ} by the grid's nodal quadrature."""
        return float(np.sum(grid.weights * self.density(grid.points)))

    def normalized_on(self, grid) -> "WeightedMeasure":
        """Shift ψ by log(mass) so the grid quadrature integrates to 1."""
        shift = float(np.log(self.mass(grid)))
        psi, dpsi = self.psi, self.psi_dx
        return replace(self, psi=lambda x: psi(x) + shift, psi_dx=dpsi, normalized=True,
                       params={**self.params, "log_mass_shift": shift})

    def check_normalized(self, grid, tol: float = 1e-6) -> float:
        mass = self.mass(grid)
        if abs(mass - 1.0) > tol:
            raise InvalidArgument(f"{self.name or 'measure'}: mass {mass:.9f} is not 1 ± {tol:g}")
        return mass

    def describe(self) -> dict:
        return {"name": self.name, "normalized": self.normalized, **self.params}


def gaussian_measure(dim: int, K: float, axes: Optional[Sequence[int]] = None,
                     center: Optional[Sequence[float]] = None) -> WeightedMeasure:
    """γ_K on the chosen axes (all by default), Lebesgue on the rest."""
    if not K > 0:
        raise InvalidArgument("gaussian measure needs K > 0")
    axes = tuple(range(dim)) if axes is None else tuple(axes)
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    mask = np.zeros(dim)
    mask[list(axes)] = 1.0
    log_norm = 0.5 * len(axes) * np.log(2.0 * np.pi / K)

    def psi(x):
        d = (x - c) * mask
        return 0.5 * K * np.sum(d * d, axis=-1) + log_norm

    def psi_dx(x):
        return K * (x - c) * mask

    return WeightedMeasure(dim=dim, psi=psi, psi_dx=psi_dx, normalized=len(axes) == dim,
                           name="gaussian", params={"K": K, "axes": list(axes)})


def uniform_measure(dim: int, volume: float = 1.0) -> WeightedMeasure:
    log_volume = float(np.log(volume))

    def psi(x):
        return np.full(np.shape(x)[:-1], log_volume)

    def psi_dx(x):
        return np.zeros(np.shape(x))

    return WeightedMeasure(dim=dim, psi=psi, psi_dx=psi_dx, normalized=True,
                           name="uniform", params={"volume": volume})


def potential_measure(dim: int, psi: PointFn, psi_dx: Optional[PointFn] = None,
                      name: str = "potential", **params) -> WeightedMeasure:
    return WeightedMeasure(dim=dim, psi=psi, psi_dx=psi_dx, name=name, params=params)


def riemannian_volume(model) -> WeightedMeasure:
    """vol_g of a Riemannian chart: ψ = −½ log det g, so Ψ ≡ 0."""
    if model.metric_fn is None:
        raise InvalidArgument("riemannian_volume needs a Riemannian chart")
    metric = model.metric_fn

    def psi(x):
        return -0.5 * np.linalg.slogdet(metric(x))[1]

    return WeightedMeasure(dim=model.dim, psi=psi, domain=model.domain, name="riemannian_volume")


def product_measure(first: WeightedMeasure, second: WeightedMeasure) -> WeightedMeasure:
    n1 = first.dim

    def psi(x):
        return first.psi(x[..., :n1]) + second.psi(x[..., n1:])

    def psi_dx(x):
        return np.concatenate([first.gradient(x[..., :n1]), second.gradient(x[..., n1:])], axis=-1)

    return WeightedMeasure(
        dim=first.dim + second.dim, psi=psi, psi_dx=psi_dx,
        domain=tuple(first.domain) + tuple(second.domain),
        normalized=first.normalized and second.normalized,
        name=f"{first.name}⊗{second.name}",
        params={"factors": [first.describe(), second.describe()]},
    )
