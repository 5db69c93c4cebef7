"""
Riemannian charts — F(x, v) = √(g_ij(x) v^i v^j).

Closed forms throughout: p = g v, g_v = g, ∂_x(F²/2) = ½ v·∂g·v.
"""
from __future__ import annotations
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from ..core.norms import CLOSED_FORM, FinslerModel, ModelKind

PointFn = Callable[[np.ndarray], np.ndarray]


def riemannian(dim: int, metric: PointFn, metric_dx: PointFn,
               domain: Sequence[Tuple[float, float]] = (), name: str = "riemannian",
               x_independent: bool = False, params: Optional[dict] = None) -> FinslerModel:
    """Build a Riemannian chart from g(x) and ∂_k g_ij(x) (index order [..., k, i, j])."""

    def norm_fn(x, v):
        return np.sqrt(np.maximum(np.einsum("...i,...ij,...j->...", v, metric(x), v), 0.0))

    def flat_fn(x, v):
        return np.einsum("...ij,...j->...i", metric(x), v)

    def tensor_fn(x, v):
        return np.broadcast_to(metric(x), v.shape + (dim,)).copy()

    def lagrangian_dx_fn(x, v):
        return 0.5 * np.einsum("...i,...kij,...j->...k", v, metric_dx(x), v)

    def flat_dx_fn(x, v):
        return np.einsum("...kij,...j->...ik", metric_dx(x), v)

    return FinslerModel(
        dim=dim, kind=ModelKind.RIEMANNIAN, norm_fn=norm_fn, scheme=CLOSED_FORM,
        domain=tuple(tuple(b) for b in domain), name=name, x_independent=x_independent,
        flat_fn=flat_fn, tensor_fn=tensor_fn, lagrangian_dx_fn=lagrangian_dx_fn,
        flat_dx_fn=flat_dx_fn, reference_metric=metric, metric_fn=metric,
        metric_dx_fn=metric_dx, params=params or {},
    )


def euclidean(dim: int, domain: Sequence[Tuple[float, float]] = ()) -> FinslerModel:
    eye = np.eye(dim)

    def metric(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(eye, x.shape[:-1] + (dim, dim))

    def metric_dx(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (dim, dim, dim))

    return riemannian(dim, metric, metric_dx, domain, name=f"euclidean{dim}",
                      x_independent=True)


def round_sphere_chart(radius: float = 1.0) -> FinslerModel:
    """
    Stereographic chart of the round sphere: g = λ² δ with λ = 2r²/(r² + |x|²).

    Sectional curvature is 1/r² everywhere; r = 1 gives λ = 2/(1 + |x|²).
    """
    r2 = radius * radius

    def conformal(x):
        return 2.0 * r2 / (r2 + np.sum(x * x, axis=-1))

    def metric(x):
        x = np.asarray(x, dtype=float)
        lam = conformal(x)
        return (lam ** 2)[..., None, None] * np.eye(2)

    def metric_dx(x):
        x = np.asarray(x, dtype=float)
        lam = conformal(x)
        # ∂_k λ = −λ² x_k / r², ∂_k g_ij = 2λ ∂_k λ δ_ij
        dlam = -(lam ** 2)[..., None] * x / r2
        return (2.0 * lam[..., None] * dlam)[..., :, None, None] * np.eye(2)

    return riemannian(2, metric, metric_dx, name="round_sphere",
                      params={"radius": radius})
