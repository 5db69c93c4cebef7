import numpy as np
import pytest

from finsgap.core.curvature import christoffel
from finsgap.core.errors import DomainExit, InvalidArgument, ZeroSection
from finsgap.core.geometry import (
    ScalarField, berwald_test, connection, covariant_derivative, distance, exponential_map,
    geodesic_residual, gradient, hessian, integrate_geodesic, spray,
)
from finsgap.core.measure import gaussian_measure, uniform_measure
from finsgap.manifolds import (
    euclidean, minkowski_randers, quartic_minkowski, round_sphere_chart, shear_randers,
)


def make_randers():
    return minkowski_randers([0.5, 0.0])


def linear(a):
    a = np.asarray(a, dtype=float)
    return ScalarField(lambda x: np.asarray(x) @ a, lambda x: np.broadcast_to(a, np.shape(x)))


def half_square():
    return ScalarField(lambda x: 0.5 * np.sum(np.asarray(x) ** 2, axis=-1), lambda x: np.asarray(x))


def test_flat_sprays_vanish():
    for model in (euclidean(2), make_randers(), quartic_minkowski(2, 0.3)):
        assert np.allclose(spray(model, [0.3, -0.1], [1.0, 2.0]), 0.0)


def test_sphere_spray_matches_christoffel():
    model = round_sphere_chart()
    x = np.array([0.3, -0.4])
    v = np.array([0.7, 0.2])
    oracle = -np.einsum("ijk,j,k->i", christoffel(model, x), v, v)
    assert np.allclose(spray(model, x, v), oracle, atol=1e-6)


def test_spray_is_two_homogeneous():
    model = round_sphere_chart()
    x = np.array([0.1, 0.5])
    v = np.array([-0.3, 0.8])
    assert np.allclose(spray(model, x, 3.0 * v), 9.0 * spray(model, x, v), rtol=1e-8)


def test_spray_on_zero_section():
    with pytest.raises(ZeroSection):
        spray(round_sphere_chart(), [0.0, 0.0], [0.0, 0.0])


def test_euclidean_geodesic_endpoint():
    geo = integrate_geodesic(euclidean(2), [0.0, 0.0], [1.0, 0.0], T=1.0)
    assert np.allclose(geo.endpoint, [1.0, 0.0])


def test_randers_geodesic_is_straight():
    x0 = np.array([0.2, -0.1])
    v0 = np.array([0.4, 0.3])
    geo = integrate_geodesic(make_randers(), x0, v0, T=2.0)
    assert np.allclose(geo.endpoint, x0 + 2.0 * v0)
    assert np.allclose(exponential_map(make_randers(), x0, v0), x0 + v0)


def test_geodesic_keeps_speed():
    model = round_sphere_chart()
    geo = integrate_geodesic(model, [0.1, 0.2], [0.5, -0.3], T=1.0, steps=32)
    assert geo.speed_drift(model) <= 1e-6
    assert geodesic_residual(model, geo) <= 1e-5


def test_geodesic_needs_steps():
    with pytest.raises(InvalidArgument):
        integrate_geodesic(euclidean(2), [0.0, 0.0], [1.0, 0.0], steps=8)


def test_geodesic_leaving_the_chart():
    model = shear_randers(0.5, 1.5)
    with pytest.raises(DomainExit) as info:
        integrate_geodesic(model, [0.0, 0.0], [3.0, 0.0], T=1.0)
    assert len(info.value.partial.points) >= 1


def test_euclidean_distance():
    assert distance(euclidean(2), [0.0, 0.0], [1.0, 0.0]) == pytest.approx(1.0, abs=1e-8)
    assert distance(euclidean(2), [0.4, 0.4], [0.4, 0.4]) == 0.0


def test_randers_distance_is_asymmetric():
    F = make_randers()
    assert distance(F, [0.0, 0.0], [1.0, 0.0]) == pytest.approx(1.5, abs=1e-6)
    assert distance(F, [1.0, 0.0], [0.0, 0.0]) == pytest.approx(0.5, abs=1e-6)


def test_distance_triangle_inequality():
    F = make_randers()
    rng = np.random.default_rng(0)
    for _ in range(3):
        x, y, z = rng.uniform(-1.0, 1.0, size=(3, 2))
        assert distance(F, x, z) <= distance(F, x, y) + distance(F, y, z) + 1e-6


def test_connection_of_flat_models():
    assert np.allclose(connection(euclidean(2), [0.2, 0.1], [1.0, 0.0]), 0.0)
    constant = lambda x: np.broadcast_to(np.array([1.0, 2.0]), np.shape(x))
    assert np.allclose(covariant_derivative(euclidean(2), [0.2, 0.1], [0.3, 0.4], [1.0, 0.0],
                                            constant), 0.0)


def test_connection_needs_reference():
    with pytest.raises(ZeroSection):
        connection(round_sphere_chart(), [0.0, 0.0], [0.0, 0.0])


def test_berwald_covariant_derivative_ignores_reference():
    model = round_sphere_chart()
    x = np.array([0.2, -0.3])
    field = lambda y: np.stack([np.sin(y[..., 1]), y[..., 0] ** 2], axis=-1)
    a = covariant_derivative(model, x, [0.5, 0.1], [1.0, 0.0], field)
    b = covariant_derivative(model, x, [0.5, 0.1], [0.2, -1.0], field)
    assert np.allclose(a, b, atol=1e-6)


def test_berwald_detection():
    points = [[0.0, 0.0], [0.3, -0.2]]
    riemannian = berwald_test(round_sphere_chart(), points)
    assert riemannian.is_berwald and riemannian.max_residual <= 1e-8
    assert berwald_test(make_randers(), points).is_berwald
    assert not berwald_test(shear_randers(0.5, 1.5), points).is_berwald


def test_gradient_is_legendre_of_differential():
    g = gradient(make_randers(), linear([1.0, 0.0]), [0.0, 0.0])
    assert np.allclose(g, [2.0 / 3.0, 0.0], atol=1e-10)


def test_hessian_examples():
    x = np.array([0.4, -0.2])
    assert np.allclose(hessian(euclidean(2), linear([1.0, 2.0]), x).matrix, 0.0, atol=1e-8)
    assert np.allclose(hessian(euclidean(2), half_square(), x).matrix, np.eye(2), atol=1e-6)
    assert np.allclose(hessian(make_randers(), linear([1.0, 2.0]), x).matrix, 0.0, atol=1e-8)


def test_hessian_is_self_adjoint():
    H = hessian(make_randers(), half_square(), [0.6, 0.3])
    rng = np.random.default_rng(2)
    for v, w in rng.standard_normal((5, 2, 2)):
        assert H.asymmetry(v, w) <= 1e-6


def test_hessian_off_the_essential_domain():
    with pytest.raises(ZeroSection):
        hessian(euclidean(2), half_square(), [0.0, 0.0])


def test_gaussian_and_uniform_measures():
    m = gaussian_measure(2, 2.0)
    x = np.array([0.5, -1.0])
    assert m.log_density(x) == pytest.approx(0.5 * 2.0 * 1.25 + np.log(np.pi))
    assert np.allclose(m.gradient(x), 2.0 * x)
    u = uniform_measure(1, 4.0)
    assert u.density(np.array([0.3])) == pytest.approx(0.25)
