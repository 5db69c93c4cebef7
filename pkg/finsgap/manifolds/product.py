"""
Products — F(x, v) = √(F₁²(x₁, v₁) + F₂²(x₂, v₂)) on M₁ × M₂.

The energy splits, L = L₁ + L₂, so the flat map, the fundamental tensor and
every x-derivative are block-diagonal in the (v₁, v₂) splitting.
"""
from __future__ import annotations
from typing import Optional

import numpy as np

from ..core.norms import CENTRAL_DIFFERENCE, CLOSED_FORM, FinslerModel, ModelKind


def _block_diag(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    lead = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    n1, n2 = a.shape[-1], b.shape[-1]
    out = np.zeros(lead + (n1 + n2, n1 + n2))
    out[..., :n1, :n1] = a
    out[..., n1:, n1:] = b
    return out


def _factor_tensor(model: FinslerModel, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """g of one factor; on its zero section, where g is direction-dependent, the reference metric."""
    zero = ~np.any(v != 0.0, axis=-1)
    if not zero.any():
        return model.tensor(x, v)
    safe = np.where(zero[..., None], np.eye(model.dim)[0], v)
    g = np.array(model.tensor(x, safe))
    if model.reference_metric is not None:
        ref = np.broadcast_to(model.reference_metric(x), g.shape)
        g[zero] = ref[zero]
    return g


def product(first: FinslerModel, second: FinslerModel, name: Optional[str] = None) -> FinslerModel:
    n1 = first.dim
    dim = first.dim + second.dim

    def split(a):
        return a[..., :n1], a[..., n1:]

    def norm_fn(x, v):
        x1, x2 = split(x)
        v1, v2 = split(v)
        return np.sqrt(first.norm(x1, v1) ** 2 + second.norm(x2, v2) ** 2)

    def flat_fn(x, v):
        x1, x2 = split(x)
        v1, v2 = split(v)
        return np.concatenate([first.flat(x1, v1), second.flat(x2, v2)], axis=-1)

    def tensor_fn(x, v):
        x1, x2 = split(x)
        v1, v2 = split(v)
        return _block_diag(_factor_tensor(first, x1, v1), _factor_tensor(second, x2, v2))

    def lagrangian_dx_fn(x, v):
        x1, x2 = split(x)
        v1, v2 = split(v)
        return np.concatenate([first.lagrangian_dx(x1, v1), second.lagrangian_dx(x2, v2)], axis=-1)

    def flat_dx_fn(x, v):
        x1, x2 = split(x)
        v1, v2 = split(v)
        return _block_diag(first.flat_dx(x1, v1), second.flat_dx(x2, v2))

    def reference_metric(x):
        x1, x2 = split(np.asarray(x, dtype=float))
        a1 = first.reference_metric(x1) if first.reference_metric else np.broadcast_to(
            np.eye(n1), x1.shape[:-1] + (n1, n1))
        a2 = second.reference_metric(x2) if second.reference_metric else np.broadcast_to(
            np.eye(second.dim), x2.shape[:-1] + (second.dim, second.dim))
        return _block_diag(a1, a2)

    riemannian = first.kind is ModelKind.RIEMANNIAN and second.kind is ModelKind.RIEMANNIAN
    metric_fn = metric_dx_fn = None
    if riemannian:
        metric_fn = reference_metric

        def metric_dx_fn(x):
            x1, x2 = split(np.asarray(x, dtype=float))
            d1 = first.metric_dx_fn(x1)
            d2 = second.metric_dx_fn(x2)
            out = np.zeros(np.broadcast_shapes(x1.shape[:-1], x2.shape[:-1]) + (dim, dim, dim))
            out[..., :n1, :n1, :n1] = d1
            out[..., n1:, n1:, n1:] = d2
            return out

    closed = first.scheme.kind == "closed_form" and second.scheme.kind == "closed_form"
    return FinslerModel(
        dim=dim,
        kind=ModelKind.RIEMANNIAN if riemannian else ModelKind.PRODUCT,
        norm_fn=norm_fn,
        scheme=CLOSED_FORM if closed else CENTRAL_DIFFERENCE,
        domain=tuple(first.domain) + tuple(second.domain),
        name=name or f"{first.name}×{second.name}",
        x_independent=first.x_independent and second.x_independent,
        flat_fn=flat_fn, tensor_fn=tensor_fn,
        lagrangian_dx_fn=lagrangian_dx_fn, flat_dx_fn=flat_dx_fn,
        reference_metric=reference_metric, metric_fn=metric_fn, metric_dx_fn=metric_dx_fn,
        factors=(first, second),
    )
