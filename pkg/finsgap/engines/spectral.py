"""
Spectral engine — the nonlinear Laplacian in weak form and the spectral gap.

P1 fields on the Kuhn triangulation of a grid, lumped trapezoidal masses M:

    E(u)  = ½ Σ_s |s| e^{−ψ(c_s)} F*(c_s, du_s)²
    Δu    = −M⁻¹ Dᵀ(|s| e^{−ψ(c_s)} ∇u_s),        ∇u_s = ℒ*(du_s)
    λ₁    = min 2E(u) / Var_m(u)

so Σ_i M_i φ_i Δu_i = −Σ_s |s| e^{−ψ(c_s)} dφ_s(∇u_s) holds exactly for every φ.
Because ∇u_s = g_{∇u_s}⁻¹ du_s, freezing g at the current iterate gives a
linear stiffness S_u with S_u u = −MΔu; the implicit eigen-iteration uses it.
"""
from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from ..core.errors import InvalidArgument, NumericalFailure
from ..core.grid import DiscreteField, Grid
from ..core.measure import WeightedMeasure
from ..core.norms import FinslerModel, legendre_batch, unit_directions

logger = logging.getLogger(__name__)

FieldOrArray = Union[DiscreteField, np.ndarray]


def _values(u: FieldOrArray) -> np.ndarray:
    return u.values if isinstance(u, DiscreteField) else np.asarray(u, dtype=float).ravel()


class WeakLaplacian:
    """The assembled weak operator for one (model, measure, grid) triple."""

    def __init__(self, model: FinslerModel, measure: WeightedMeasure, grid: Grid):
        if model.dim != grid.dim or measure.dim != grid.dim:
            raise InvalidArgument("model, measure and grid dimensions differ")
        self.model = model
        self.measure = measure
        self.grid = grid
        cx = grid.simplices
        self.D = cx.differential
        self.centroids = cx.centroids
        self.simplex_weights = cx.volumes * measure.density(cx.centroids)
        self.masses = grid.weights * measure.density(grid.points)
        self._n = grid.dim
        self._stable: Optional[float] = None

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.masses))

    def differentials(self, u: FieldOrArray) -> np.ndarray:
        return (self.D @ _values(u)).reshape(-1, self._n)

    def fluxes(self, u: FieldOrArray) -> np.ndarray:
        """∇u_s = ℒ*(du_s) on every simplex."""
        return legendre_batch(self.model, self.centroids, self.differentials(u))

    def dual_norms2(self, u: FieldOrArray) -> np.ndarray:
        """F*(du_s)² = du_s(∇u_s)."""
        du = self.differentials(u)
        grad = legendre_batch(self.model, self.centroids, du)
        return np.einsum("si,si->s", du, grad)

    def energy(self, u: FieldOrArray) -> float:
        return 0.5 * float(self.simplex_weights @ self.dual_norms2(u))

    def mean(self, u: FieldOrArray) -> float:
        return float(self.masses @ _values(u)) / self.total_mass

    def variance(self, u: FieldOrArray) -> float:
        v = _values(u)
        return float(self.masses @ (v - self.mean(v)) ** 2) / self.total_mass

    def quotient(self, u: FieldOrArray) -> float:
        return 2.0 * self.energy(u) / self.variance(u)

    def apply(self, u: FieldOrArray) -> np.ndarray:
        flux = self.simplex_weights[:, None] * self.fluxes(u)
        return -(self.D.T @ flux.ravel()) / self.masses

    def _blocks(self, matrices: np.ndarray) -> sparse.csr_matrix:
        return sparse.block_diag(list(matrices), format="csr")

    def frozen_stiffness(self, u: FieldOrArray) -> sparse.csr_matrix:
        """Dᵀ W g_{∇u}⁻¹ D with g frozen at the current iterate."""
        du = self.differentials(u)
        grad = legendre_batch(self.model, self.centroids, du)
        live = np.any(grad != 0.0, axis=-1)
        n = self._n
        inv = np.empty((len(grad), n, n))
        if live.any():
            inv[live] = np.linalg.inv(self.model.tensor(self.centroids[live], grad[live]))
        if (~live).any():
            inv[~live] = self._reference_inverse(self.centroids[~live])
        inv *= self.simplex_weights[:, None, None]
        return (self.D.T @ _block_matrix(inv) @ self.D).tocsc()

    def euclidean_stiffness(self) -> sparse.csr_matrix:
        W = sparse.diags(np.repeat(self.simplex_weights, self._n))
        return (self.D.T @ W @ self.D).tocsc()

    def _reference_inverse(self, points: np.ndarray) -> np.ndarray:
        if self.model.reference_metric is not None:
            return np.linalg.inv(self.model.reference_metric(points))
        return np.broadcast_to(np.eye(self._n), (len(points), self._n, self._n))

    def stable_step(self) -> float:
        """2/ρ̄ with ρ̄ a Gershgorin bound on the spectrum of −Δ."""
        if self._stable is not None:
            return self._stable
        n = self._n
        dirs = unit_directions(n, 16)
        if self.model.x_independent:
            sample = np.zeros((1, n))
        else:
            stride = max(1, len(self.centroids) // 2048)
            sample = self.centroids[::stride]
        pts = np.repeat(sample, len(dirs), axis=0)
        vecs = np.tile(dirs, (len(sample), 1))
        beta = float(np.max(1.0 / np.linalg.eigvalsh(self.model.tensor(pts, vecs))[:, 0]))
        rows = np.asarray(abs(self.euclidean_stiffness()).sum(axis=1)).ravel()
        self._stable = 2.0 / (beta * float(np.max(rows / self.masses)))
        return self._stable


def _block_matrix(blocks: np.ndarray) -> sparse.csr_matrix:
    s, n, _ = blocks.shape
    base = (np.arange(s) * n)[:, None, None]
    rows = np.broadcast_to(base + np.arange(n)[None, :, None], blocks.shape)
    cols = np.broadcast_to(base + np.arange(n)[None, None, :], blocks.shape)
    return sparse.csr_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())), shape=(s * n, s * n))


def assemble(model: FinslerModel, measure: WeightedMeasure, grid: Grid) -> WeakLaplacian:
    return WeakLaplacian(model, measure, grid)


# ── Operations ──────────────────────────────────────────────────────────

def gradient_field(model: FinslerModel, measure: WeightedMeasure, grid: Grid,
                   u: FieldOrArray) -> np.ndarray:
    """Nodal ∇u: central-difference du, then the Legendre transform; zero where du = 0."""
    du = grid.nodal_differential(_values(u))
    try:
        return legendre_batch(model, grid.points, du)
    except NumericalFailure as exc:
        for i in range(grid.size):
            try:
                legendre_batch(model, grid.points[i], du[i])
            except NumericalFailure as node_exc:
                raise NumericalFailure(f"legendre transform failed at node {i}",
                                       best=node_exc.best,
                                       residuals={**node_exc.residuals, "node": i},
                                       iterate=node_exc.iterate) from exc
        raise


def energy(model: FinslerModel, measure: WeightedMeasure, grid: Grid, u: FieldOrArray) -> float:
    return assemble(model, measure, grid).energy(u)


def nonlinear_laplacian(model: FinslerModel, measure: WeightedMeasure, grid: Grid,
                        u: FieldOrArray) -> DiscreteField:
    return DiscreteField(grid, assemble(model, measure, grid).apply(u), name="laplacian")


def stable_step(model: FinslerModel, measure: WeightedMeasure, grid: Grid) -> float:
    return assemble(model, measure, grid).stable_step()


def heat_step(model: FinslerModel, measure: WeightedMeasure, grid: Grid, u: FieldOrArray,
              tau: float, operator: Optional[WeakLaplacian] = None) -> DiscreteField:
    """Explicit Euler u + τΔu."""
    op = operator or assemble(model, measure, grid)
    bound = op.stable_step()
    if not 0.0 < tau <= bound * (1.0 + 1e-12):
        raise InvalidArgument(f"heat step τ={tau:.3e} outside (0, {bound:.3e}]")
    v = _values(u)
    return DiscreteField(grid, v + tau * op.apply(v))


def heat_flow(model: FinslerModel, measure: WeightedMeasure, grid: Grid, u: FieldOrArray,
              T: float, tau: Optional[float] = None) -> DiscreteField:
    op = assemble(model, measure, grid)
    tau = 0.4 * op.stable_step() if tau is None else tau
    steps = max(1, int(np.ceil(T / tau)))
    field_ = u if isinstance(u, DiscreteField) else DiscreteField(grid, u)
    for _ in range(steps):
        field_ = heat_step(model, measure, grid, field_, T / steps, operator=op)
    return field_


def eigen_residual(model: FinslerModel, measure: WeightedMeasure, grid: Grid, u: FieldOrArray,
                   eigenvalue: float, operator: Optional[WeakLaplacian] = None) -> float:
    """‖Δu + λu‖ in the dual of the discrete H¹ norm."""
    op = operator or assemble(model, measure, grid)
    v = _values(u)
    functional = op.masses * (op.apply(v) + eigenvalue * v)
    lu = splu((op.euclidean_stiffness() + sparse.diags(op.masses)).tocsc())
    return float(np.sqrt(max(functional @ lu.solve(functional), 0.0)))


@dataclass
class EigenResult:
    eigenvalue: float
    eigenfield: DiscreteField
    residual: float
    iterations: int
    method: str = "implicit"
    history: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "eigenvalue": self.eigenvalue,
            "residual": self.residual,
            "iterations": self.iterations,
            "method": self.method,
        }


def _normalize(op: WeakLaplacian, v: np.ndarray) -> np.ndarray:
    v = v - op.mean(v)
    return v / np.sqrt(op.variance(v))


def _orient(v: np.ndarray) -> np.ndarray:
    big = np.flatnonzero(np.abs(v) > 0.1)
    if big.size and v[big[0]] < 0:
        return -v
    return v


def first_eigenvalue(model: FinslerModel, measure: WeightedMeasure, grid: Grid, seed: int = 0,
                     max_iter: int = 2000, tol: float = 1e-10, window: int = 50,
                     method: str = "implicit", initial: Optional[FieldOrArray] = None,
                     stretch: float = 50.0) -> EigenResult:
    """
    Minimize the Rayleigh quotient over zero-mean fields by descent on heat steps.

    implicit: (M + τS_u)u⁺ = Mu with g frozen at u and τ = stretch/R(u).
    explicit: u⁺ = u + τΔu with τ = 0.4·stable_step.
    Every accepted step lowers the quotient (up to 1e−12); an iteration in which
    every shortened step is rejected raises NumericalFailure. Converged when the
    quotient moves less than tol over `window` iterations.
    """
    if method not in ("implicit", "explicit"):
        raise InvalidArgument(f"unknown eigen method {method!r}")
    measure.check_normalized(grid)
    op = assemble(model, measure, grid)
    if initial is None:
        rng = np.random.default_rng(seed)
        u = rng.standard_normal(grid.size)
    else:
        u = _values(initial).copy()
    u = _normalize(op, u)
    quotient = op.quotient(u)
    history = [quotient]
    M = sparse.diags(op.masses)
    explicit_tau = 0.4 * op.stable_step() if method == "explicit" else 0.0

    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        tau = stretch / max(quotient, 1e-12) if method == "implicit" else explicit_tau
        for attempt in range(24):
            if method == "implicit":
                lu = splu((M + tau * op.frozen_stiffness(u)).tocsc())
                candidate = lu.solve(op.masses * u)
            else:
                candidate = u + tau * op.apply(u)
            candidate = _normalize(op, candidate)
            q = op.quotient(candidate)
            if q <= quotient + 1e-12:
                break
            logger.warning("eigen: step rejected (R %.12g → %.12g), τ=%.3e", quotient, q, tau)
            tau *= 0.25
        else:
            field_ = _orient(u)
            raise NumericalFailure(
                f"eigen-iteration stalled at iteration {iteration}: no step lowered the quotient",
                best=quotient,
                residuals={"eigen": eigen_residual(model, measure, grid, field_, quotient, operator=op),
                           "rejected_quotient": q},
                iterate=DiscreteField(grid, field_, name="eigenfield"),
            )
        u, quotient = candidate, q
        history.append(quotient)
        if iteration % 100 == 0:
            logger.debug("eigen[%s]: iteration %d, R=%.14g", method, iteration, quotient)
        if len(history) > window and abs(history[-1 - window] - quotient) < tol * max(1.0, quotient):
            converged = True
            break

    u = _orient(u)
    eigenfield = DiscreteField(grid, u, name="eigenfield")
    residual = eigen_residual(model, measure, grid, u, quotient, operator=op)
    if not converged:
        raise NumericalFailure(
            f"eigen-iteration did not converge in {max_iter} iterations",
            best=quotient,
            residuals={"eigen": residual,
                       "quotient_change": abs(history[-1] - history[max(0, len(history) - 1 - window)])},
            iterate=eigenfield,
        )
    logger.info("λ₁ = %.12g after %d iterations (%s), residual %.2e",
                quotient, iteration, method, residual)
    return EigenResult(eigenvalue=quotient, eigenfield=eigenfield, residual=residual,
                       iterations=iteration, method=method, history=history)
