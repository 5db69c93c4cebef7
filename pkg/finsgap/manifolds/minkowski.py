"""
Minkowski norms — x-independent Finsler structures given only by F on the fiber.

Derivatives come from central differences of F²/2; the geometry is flat (spray ≡ 0).
"""
from __future__ import annotations
from typing import Callable, Optional, Sequence

import numpy as np

from ..core.norms import CENTRAL_DIFFERENCE, DerivativeScheme, FinslerModel, ModelKind

FiberFn = Callable[[np.ndarray], np.ndarray]


def minkowski(dim: int, fiber_norm: FiberFn, reference: Optional[np.ndarray] = None,
              scheme: DerivativeScheme = CENTRAL_DIFFERENCE, name: str = "minkowski",
              params: Optional[dict] = None) -> FinslerModel:
    ref = np.eye(dim) if reference is None else np.asarray(reference, dtype=float)

    def reference_metric(x):
        return np.broadcast_to(ref, np.shape(x)[:-1] + (dim, dim))

    return FinslerModel(
        dim=dim, kind=ModelKind.MINKOWSKI, norm_fn=lambda x, v: fiber_norm(v),
        scheme=scheme, name=name, x_independent=True,
        reference_metric=reference_metric, params=params or {},
    )


def quartic_minkowski(dim: int = 2, weight: float = 0.3,
                      metric: Optional[Sequence[Sequence[float]]] = None) -> FinslerModel:
    """
    F(v) = √(vᵀAv) + c·(Σ v_i⁴)^{1/4}: reversible, smooth off the zero section,
    strongly convex because the Euclidean part is, and not Riemannian for c > 0.
    """
    A = np.eye(dim) if metric is None else np.asarray(metric, dtype=float)

    def fiber_norm(v):
        quad = np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", v, A, v), 0.0))
        return quad + weight * np.sum(v ** 4, axis=-1) ** 0.25

    return minkowski(dim, fiber_norm, reference=A, name="quartic_minkowski",
                     params={"weight": weight})
