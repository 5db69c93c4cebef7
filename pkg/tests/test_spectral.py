import numpy as np
import pytest

from finsgap.core.errors import InvalidArgument, NumericalFailure
from finsgap.core.grid import Axis, DiscreteField, Grid
from finsgap.core.measure import gaussian_measure
from finsgap.engines import spectral
from finsgap.engines.spectral import (
    assemble, eigen_residual, energy, first_eigenvalue, heat_flow, heat_step, nonlinear_laplacian,
    stable_step,
)
from finsgap.manifolds import euclidean, minkowski_randers, quartic_minkowski


def make_plane(count=17, half_width=3.0):
    return Grid([Axis.interval(-half_width, half_width, count)] * 2)


@pytest.fixture(scope="module")
def gaussian_line():
    grid = Grid.line(-8.0, 8.0, 1601)
    return euclidean(1), gaussian_measure(1, 1.0), grid


@pytest.fixture(scope="module")
def gaussian_eigen(gaussian_line):
    model, measure, grid = gaussian_line
    return first_eigenvalue(model, measure, grid, seed=3)


@pytest.mark.parametrize("model", [euclidean(2), minkowski_randers([0.5, 0.0]), quartic_minkowski(2, 0.3)],
                         ids=lambda m: m.name)
def test_weak_form_identity(model):
    grid = make_plane()
    op = assemble(model, gaussian_measure(2, 1.0), grid)
    rng = np.random.default_rng(0)
    for _ in range(20):
        u, phi = rng.standard_normal((2, grid.size))
        lhs = op.masses @ (phi * op.apply(u))
        rhs = -op.simplex_weights @ np.einsum("si,si->s", op.differentials(phi), op.fluxes(u))
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


def test_energy_is_two_homogeneous():
    model, grid = minkowski_randers([0.5, 0.0]), make_plane()
    m = gaussian_measure(2, 1.0)
    u = np.sin(grid.points[:, 0]) + grid.points[:, 1]
    assert energy(model, m, grid, 3.0 * u) == pytest.approx(9.0 * energy(model, m, grid, u), rel=1e-10)
    assert energy(model, m, grid, u) > 0.0


def test_laplacian_of_constants_vanishes():
    grid = make_plane()
    lap = nonlinear_laplacian(quartic_minkowski(2, 0.3), gaussian_measure(2, 1.0), grid, np.ones(grid.size))
    assert isinstance(lap, DiscreteField)
    assert np.allclose(lap.values, 0.0)


def test_laplacian_is_positively_homogeneous_but_not_odd():
    grid = make_plane()
    op = assemble(minkowski_randers([0.5, 0.0]), gaussian_measure(2, 1.0), grid)
    u = grid.points[:, 0] ** 2 + 0.5 * grid.points[:, 1]
    assert np.allclose(op.apply(2.0 * u), 2.0 * op.apply(u))
    assert not np.allclose(op.apply(-u), -op.apply(u))


def test_dimension_mismatch():
    with pytest.raises(InvalidArgument):
        assemble(euclidean(2), gaussian_measure(1, 1.0), make_plane())


def test_heat_flow_conserves_mass():
    model, m, grid = euclidean(2), gaussian_measure(2, 1.0), make_plane()
    op = assemble(model, m, grid)
    u = np.exp(-np.sum((grid.points - 0.5) ** 2, axis=1))
    v = heat_flow(model, m, grid, u, T=0.05)
    assert op.masses @ v.values == pytest.approx(op.masses @ u, rel=1e-10)


def test_heat_step_outside_stable_range():
    model, m, grid = euclidean(2), gaussian_measure(2, 1.0), make_plane()
    u = np.zeros(grid.size)
    with pytest.raises(InvalidArgument):
        heat_step(model, m, grid, u, tau=2.0 * stable_step(model, m, grid))
    with pytest.raises(InvalidArgument):
        heat_step(model, m, grid, u, tau=0.0)


def test_gaussian_spectral_gap(gaussian_eigen):
    assert gaussian_eigen.eigenvalue == pytest.approx(1.0, abs=1e-3)
    assert gaussian_eigen.residual <= 1e-3
    assert gaussian_eigen.method == "implicit"


def test_gaussian_eigenfield_is_linear(gaussian_line, gaussian_eigen):
    _, measure, grid = gaussian_line
    u = gaussian_eigen.eigenfield.values
    w = grid.weights * measure.density(grid.points)
    t = grid.points[:, 0]
    assert w @ u == pytest.approx(0.0, abs=1e-8)
    corr = (w @ (u * t)) / np.sqrt((w @ (u * u)) * (w @ (t * t)))
    assert abs(corr) >= 0.999


def test_rayleigh_history_never_increases(gaussian_eigen):
    history = np.asarray(gaussian_eigen.history)
    assert np.all(np.diff(history) <= 1e-12)


def test_eigen_is_deterministic(gaussian_line, gaussian_eigen):
    again = first_eigenvalue(*gaussian_line, seed=3)
    assert again.eigenvalue == gaussian_eigen.eigenvalue
    assert np.array_equal(again.eigenfield.values, gaussian_eigen.eigenfield.values)


def test_eigen_needs_a_probability_measure():
    with pytest.raises(InvalidArgument):
        first_eigenvalue(euclidean(1), gaussian_measure(1, 1.0), Grid.line(-1.0, 1.0, 101))


def test_unknown_eigen_method(gaussian_line):
    with pytest.raises(InvalidArgument):
        first_eigenvalue(*gaussian_line, method="lanczos")


def test_eigen_residual_of_linear_field(gaussian_line):
    model, measure, grid = gaussian_line
    x = grid.points[:, 0]
    exact = eigen_residual(model, measure, grid, x, 1.0)
    assert exact < 1e-2 * eigen_residual(model, measure, grid, x, 2.0)
    assert eigen_residual(model, measure, grid, np.ones(grid.size), 0.0) == pytest.approx(0.0, abs=1e-12)


def test_eigen_converges_at_second_order_or_better():
    measure = gaussian_measure(1, 1.0)
    values = [first_eigenvalue(euclidean(1), measure, Grid.line(-8.0, 8.0, n), seed=0).eigenvalue
              for n in (101, 201, 401)]
    coarse, fine = values[0] - values[1], values[1] - values[2]
    assert abs(fine) < abs(coarse)
    assert np.log2(abs(coarse / fine)) >= 2.0


def test_eigenfield_ignores_seed_scaling(gaussian_line):
    u0 = np.random.default_rng(5).standard_normal(gaussian_line[2].size)
    plain = first_eigenvalue(*gaussian_line, initial=u0)
    scaled = first_eigenvalue(*gaussian_line, initial=1e3 * u0)
    assert scaled.eigenvalue == pytest.approx(plain.eigenvalue, abs=1e-12)
    assert np.allclose(scaled.eigenfield.values, plain.eigenfield.values, atol=1e-8)


def test_stalled_descent_is_a_failure(monkeypatch):
    calls = iter(range(10 ** 6))
    monkeypatch.setattr(spectral.WeakLaplacian, "quotient", lambda self, u: 1.0 + next(calls))
    grid = Grid.line(-8.0, 8.0, 201)
    with pytest.raises(NumericalFailure) as info:
        first_eigenvalue(euclidean(1), gaussian_measure(1, 1.0), grid, seed=0)
    assert info.value.best == 1.0
    assert info.value.residuals["rejected_quotient"] > 1.0
    assert isinstance(info.value.iterate, DiscreteField)
