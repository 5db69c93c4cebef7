import numpy as np
import pytest
from scipy.special import ndtr

from finsgap.core.errors import InvalidArgument
from finsgap.core.grid import Axis, Grid
from finsgap.core.measure import gaussian_measure
from finsgap.engines.inequalities import (
    entropy, gaussian_profile, gaussian_quantile, isoperimetric_deficit,
    isoperimetric_profile_curve, log_sobolev_deficit, minkowski_content, poincare_deficit,
    set_measure, variance,
)
from finsgap.manifolds import euclidean, minkowski_randers

PHI0 = 1.0 / np.sqrt(2.0 * np.pi)


@pytest.fixture(scope="module")
def gaussian_line():
    return euclidean(1), gaussian_measure(1, 1.0), Grid.line(-8.0, 8.0, 1601)


def test_gaussian_profile_values():
    assert gaussian_profile(1.0, 0.5) == pytest.approx(0.3989423, abs=1e-6)
    assert gaussian_profile(4.0, 0.5) == pytest.approx(2.0 * PHI0, abs=1e-6)
    assert gaussian_profile(1.0, 0.2) == pytest.approx(gaussian_profile(1.0, 0.8), abs=1e-12)


def test_gaussian_quantile():
    assert gaussian_quantile(1.0, 0.5) == pytest.approx(0.0, abs=1e-12)
    assert gaussian_quantile(4.0, float(ndtr(1.0))) == pytest.approx(0.5, abs=1e-10)
    for theta in (1e-6, 0.3, 0.999):
        assert ndtr(gaussian_quantile(1.0, theta)) == pytest.approx(theta, rel=1e-10)


@pytest.mark.parametrize("theta", [0.0, 1.0, -0.1])
def test_quantile_outside_unit_interval(theta):
    with pytest.raises(InvalidArgument):
        gaussian_quantile(1.0, theta)


def test_profile_curve_peaks_at_half():
    thetas = np.linspace(0.01, 0.99, 99)
    curve = isoperimetric_profile_curve(2.0, thetas)
    assert np.argmax(curve) == 49
    assert np.all(curve > 0.0)


def test_curvature_bound_must_be_positive(gaussian_line):
    with pytest.raises(InvalidArgument):
        poincare_deficit(*gaussian_line, lambda x: x[..., 0], K=0.0)


def test_poincare_equality_for_linear_functions(gaussian_line):
    report = poincare_deficit(*gaussian_line, lambda x: x[..., 0], K=1.0)
    assert report.lhs == pytest.approx(1.0, abs=1e-3)
    assert abs(report.deficit) <= 1e-3


def test_poincare_deficit_of_second_hermite(gaussian_line):
    report = poincare_deficit(*gaussian_line, lambda x: x[..., 0] ** 2 - 1.0, K=1.0)
    assert report.lhs == pytest.approx(2.0, abs=1e-2)
    assert report.deficit == pytest.approx(2.0, abs=1e-2)


def test_variance_and_entropy_of_constants(gaussian_line):
    _, measure, grid = gaussian_line
    assert variance(measure, grid, np.full(grid.size, 3.0)) == pytest.approx(0.0, abs=1e-12)
    assert entropy(measure, grid, np.ones(grid.size)) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("a", [0.25, 0.5, 1.0])
def test_log_sobolev_equality_for_exponential_tilts(gaussian_line, a):
    rho = lambda x: np.exp(a * x[..., 0] - 0.5 * a * a)
    report = log_sobolev_deficit(*gaussian_line, rho(gaussian_line[2].points), K=1.0)
    assert report.lhs == pytest.approx(0.5 * a * a, abs=1e-3)
    assert abs(report.deficit) <= 1e-3


def test_log_sobolev_strict_for_non_tilts(gaussian_line):
    grid = gaussian_line[2]
    rho = 1.0 + 0.5 * np.sin(grid.points[:, 0])
    assert log_sobolev_deficit(*gaussian_line, rho, K=1.0).deficit > 1e-3


def test_log_sobolev_renormalizes(gaussian_line):
    grid = gaussian_line[2]
    rho = np.exp(0.5 * grid.points[:, 0] - 0.125)
    once = log_sobolev_deficit(*gaussian_line, rho, K=1.0)
    scaled = log_sobolev_deficit(*gaussian_line, 7.0 * rho, K=1.0)
    assert scaled.deficit == pytest.approx(once.deficit, abs=1e-10)
    assert scaled.parameters["normalization"] == pytest.approx(7.0 * once.parameters["normalization"])


def test_log_sobolev_rejects_negative_densities(gaussian_line):
    grid = gaussian_line[2]
    with pytest.raises(InvalidArgument):
        log_sobolev_deficit(*gaussian_line, grid.points[:, 0], K=1.0)


def test_half_line_measure_and_content(gaussian_line):
    model, measure, grid = gaussian_line
    A = grid.points[:, 0] <= 1e-12
    assert set_measure(measure, grid, A) == pytest.approx(0.5, abs=1e-6)
    assert minkowski_content(model, measure, grid, A) == pytest.approx(PHI0, abs=1e-6)
    report = isoperimetric_deficit(model, measure, grid, A, K=1.0)
    assert abs(report.deficit) <= 1e-5
    assert report.parameters["theta"] == pytest.approx(0.5, abs=1e-6)


def test_asymmetric_content_on_a_line(gaussian_line):
    _, measure, grid = gaussian_line
    randers = minkowski_randers([0.5])
    A = grid.points[:, 0] <= 1e-12
    assert minkowski_content(randers, measure, grid, A) == pytest.approx(PHI0 / 1.5, rel=1e-5)
    B = grid.points[:, 0] >= -1e-12
    assert minkowski_content(randers, measure, grid, B) == pytest.approx(PHI0 / 0.5, rel=1e-5)
    report = isoperimetric_deficit(randers, measure, grid, A, K=1.0)
    assert report.parameters["reversibility"] == pytest.approx(3.0, rel=1e-6)
    assert report.deficit > 0.0


def test_node_sets_must_be_proper(gaussian_line):
    _, measure, grid = gaussian_line
    with pytest.raises(InvalidArgument):
        set_measure(measure, grid, np.zeros(grid.size, dtype=bool))
    with pytest.raises(InvalidArgument):
        set_measure(measure, grid, np.ones(grid.size, dtype=bool))
    with pytest.raises(InvalidArgument):
        set_measure(measure, grid, np.ones(3, dtype=bool))


def test_half_plane_content():
    grid = Grid([Axis.interval(-6.0, 6.0, 121)] * 2)
    measure = gaussian_measure(2, 1.0)
    A = lambda x: x[..., 0] <= 1e-12
    content = minkowski_content(euclidean(2), measure, grid, A)
    assert content == pytest.approx(PHI0, rel=1e-2)
    assert set_measure(measure, grid, A) == pytest.approx(0.5, abs=1e-4)
