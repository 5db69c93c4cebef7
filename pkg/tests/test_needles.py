import numpy as np
import pytest

from finsgap.core.errors import InvalidArgument, InvalidDecomposition
from finsgap.engines.inequalities import gaussian_profile, gaussian_quantile
from finsgap.engines.needles import (
    NeedleDecomposition, check_transport_rays, classify_equality_needle, make_gaussian_needle, make_needle,
    make_quartic_needle, needle_balance, needle_isoperimetric_minimum, needle_logsobolev_deficit,
    needle_poincare, needle_profile_gap, needle_set_content, needle_witness_gap, product_decomposition,
    verify_disintegration,
)
from finsgap.engines.rigidity import ProductModel
from finsgap.manifolds import Circle


@pytest.fixture(scope="module")
def gaussian():
    return make_gaussian_needle(1.0)


def test_gaussian_needle_is_a_probability(gaussian):
    assert gaussian.mass == pytest.approx(1.0, abs=1e-12)
    assert (gaussian.lo, gaussian.hi) == (-8.0, 8.0)
    assert gaussian.cdf(0.0) == pytest.approx(0.5, abs=1e-9)
    assert gaussian.quantile(0.5) == pytest.approx(0.0, abs=1e-8)


def test_needle_validation():
    with pytest.raises(InvalidArgument):
        make_gaussian_needle(0.0)
    with pytest.raises(InvalidArgument):
        make_gaussian_needle(1.0, R=4.0)
    with pytest.raises(InvalidArgument):
        make_quartic_needle(-0.1)
    with pytest.raises(InvalidArgument):
        make_needle(lambda t: t * 0.0, (1.0, 1.0))


def test_curvature_dimension_condition():
    assert make_gaussian_needle(2.0).is_cd(2.0)
    quartic = make_quartic_needle(0.05)
    assert quartic.is_cd(1.0)
    assert quartic.curvature_bound() == pytest.approx(1.0)
    uniform = make_needle(lambda t: t * 0.0, (-1.0, 1.0), nodes=201)
    assert not uniform.is_cd(1.0)


@pytest.mark.parametrize("K", [0.5, 1.0, 2.0])
def test_gaussian_needle_gap_is_K(K):
    spectrum = needle_poincare(make_gaussian_needle(K), K)
    assert spectrum.eigenvalue == pytest.approx(K, rel=1e-4)
    assert abs(spectrum.deficit) <= 1e-4 * K


def test_gaussian_eigenfunction_is_linear(gaussian):
    u = needle_poincare(gaussian, 1.0).eigenfunction
    t = gaussian.nodes
    w = gaussian.masses
    corr = (w @ (u * t)) / np.sqrt((w @ (u * u)) * (w @ (t * t)))
    assert corr >= 0.9999


@pytest.mark.parametrize("s", [0.01, 0.05, 0.2])
def test_quartic_needles_have_strict_gap(s):
    spectrum = needle_poincare(make_quartic_needle(s), 1.0)
    assert spectrum.deficit > 1e-3


def test_log_sobolev_on_needles(gaussian):
    tilt = needle_logsobolev_deficit(gaussian, lambda t: np.exp(0.5 * t - 0.125), 1.0)
    assert abs(tilt.deficit) <= 1e-3
    quartic = make_quartic_needle(0.1)
    strict = needle_logsobolev_deficit(quartic, lambda t: np.exp(0.5 * t), 1.0)
    assert strict.deficit > 1e-4


@pytest.mark.parametrize("theta", [0.1, 0.3, 0.5, 0.9])
def test_gaussian_isoperimetric_minimum_is_a_half_line(gaussian, theta):
    best = needle_isoperimetric_minimum(gaussian, theta)
    assert best.minimizer_type in ("left_half_line", "right_half_line")
    assert best.content == pytest.approx(gaussian_profile(1.0, theta), abs=1e-5)
    if best.minimizer_type == "left_half_line":
        assert best.boundary[0] == pytest.approx(gaussian_quantile(1.0, theta), abs=1e-4)
    assert abs(needle_profile_gap(gaussian, theta, 1.0)) <= 1e-5


def test_quartic_profile_dominates_gaussian():
    quartic = make_quartic_needle(0.1)
    for theta in (0.2, 0.5, 0.8):
        assert needle_profile_gap(quartic, theta, 1.0) > 0.0


def test_isoperimetric_minimum_theta_range(gaussian):
    with pytest.raises(InvalidArgument):
        needle_isoperimetric_minimum(gaussian, 1.0)


def test_classify_gaussian_needles():
    result = classify_equality_needle(make_gaussian_needle(1.0, center=0.7), 1.0)
    assert result.is_gaussian
    assert result.center == pytest.approx(0.7, abs=1e-6)
    assert result.max_deviation == pytest.approx(0.0, abs=1e-12)
    quartic = classify_equality_needle(make_quartic_needle(0.05), 1.0)
    assert not quartic.is_gaussian
    assert quartic.max_deviation > 1.0


@pytest.fixture(scope="module")
def product():
    return ProductModel(Circle(2.0 * np.pi), K=0.5, sigma_nodes=8, line_nodes=81)


def test_product_decomposition_disintegrates(product):
    decomposition = product_decomposition(product)
    assert decomposition.size == 8
    assert decomposition.ray_residual <= 1e-6
    assert check_transport_rays(decomposition) == decomposition.ray_residual
    f = lambda x: np.exp(0.3 * x[..., -1]) * (2.0 + np.cos(x[..., 0]))
    assert verify_disintegration(decomposition, f) <= 1e-10


def test_disintegration_of_zero_mean_tests(product):
    decomposition = product_decomposition(product)
    assert verify_disintegration(decomposition, lambda x: x[..., -1]) <= 1e-10


def test_balanced_needles(product):
    balance = needle_balance(product_decomposition(product), 0.3)
    assert np.max(np.abs(balance)) <= 1e-10


def test_rays_must_be_transport_rays(product):
    good = product_decomposition(product)
    slanted = NeedleDecomposition(good.model, good.measure, good.grid,
                                  lambda x: 2.0 * np.asarray(x)[..., -1], good.index_points,
                                  good.index_weights, good.needles, good.ray)
    with pytest.raises(InvalidDecomposition):
        verify_disintegration(slanted, lambda x: x[..., -1])


def test_decomposition_shapes(product):
    good = product_decomposition(product)
    with pytest.raises(InvalidArgument):
        NeedleDecomposition(good.model, good.measure, good.grid, good.guiding, good.index_points,
                            good.index_weights[:-1], good.needles, good.ray)


def test_quartic_gap_grows_with_the_quartic_term():
    eigenvalues = []
    for s in (0.0, 0.05, 0.1, 0.15, 0.2):
        spectrum = needle_poincare(make_quartic_needle(s), 1.0)
        assert spectrum.eigenvalue >= 1.0 - 1e-3
        if s == 0.0:
            assert abs(spectrum.deficit) <= 1e-4
        else:
            assert spectrum.deficit > 1e-3
        eigenvalues.append(spectrum.eigenvalue)
    assert np.all(np.diff(eigenvalues) > 0.0)


def test_half_lines_beat_intervals_on_the_gaussian(gaussian):
    best = needle_isoperimetric_minimum(gaussian, 0.5, 1.0)
    assert best.minimizer_type in ("left_half_line", "right_half_line")
    assert best.content == pytest.approx(0.3989423, abs=1e-4)
    assert best.competitors["interval"] >= best.content - 1e-12
    q = gaussian.quantile(0.75)
    assert needle_set_content(gaussian, (-q, q)) > best.content + 0.1


@pytest.mark.parametrize("s", [0.0, 0.05, 0.1, 0.15, 0.2])
def test_profile_gap_is_nonnegative_on_cd_needles(s):
    needle = make_quartic_needle(s)
    for theta in np.linspace(0.1, 0.9, 9):
        best = needle_isoperimetric_minimum(needle, float(theta), 1.0)
        assert best.profile_gap >= -1e-3
        assert best.profile_gap == pytest.approx(needle_profile_gap(needle, float(theta), 1.0))


@pytest.mark.parametrize("s", [0.0, 0.1])
def test_log_sobolev_holds_for_random_densities(s):
    needle = make_quartic_needle(s)
    rng = np.random.default_rng(11)
    for c in rng.normal(0.0, 0.5, size=(20, 3)):
        rho = lambda t, c=c: np.exp(c[0] * t + c[1] * np.sin(t) + c[2] * np.cos(2.0 * t))
        assert needle_logsobolev_deficit(needle, rho, 1.0).deficit >= -1e-3


def test_witness_gap_of_half_lines_and_intervals(gaussian):
    assert needle_set_content(gaussian, (-np.inf, 0.0)) == pytest.approx(gaussian.density(0.0))
    assert needle_witness_gap(gaussian, (-np.inf, 0.0), 1.0) == pytest.approx(0.0, abs=1e-6)
    assert needle_witness_gap(gaussian, (-0.5, 0.5), 1.0) > 0.1
    assert needle_witness_gap(gaussian, (0.2, 1.0), 1.0) > 0.1
    with pytest.raises(InvalidArgument):
        needle_witness_gap(gaussian, (-np.inf, -20.0), 1.0)
    with pytest.raises(InvalidArgument):
        needle_set_content(gaussian, (1.0, 1.0))


def test_classification_is_centered():
    shifted = classify_equality_needle(make_gaussian_needle(1.0, center=0.7), 1.0)
    assert shifted.centered_residual == pytest.approx(0.0, abs=1e-9)
    mislabeled = make_needle(lambda t: 0.5 * t ** 2 + 0.2 * t ** 4, (-8.0, 8.0),
                             psi_dd=lambda t: np.full(np.shape(t), 1.0))
    result = classify_equality_needle(mislabeled, 1.0)
    assert result.max_deviation == pytest.approx(0.0, abs=1e-12)
    assert result.centered_residual > 1.0
    assert not result.is_gaussian
    with pytest.raises(InvalidArgument):
        classify_equality_needle(make_gaussian_needle(1.0), 0.0)


def test_needle_mass_must_stay_on_its_ray(product):
    assert product_decomposition(product).support_excess() == 0.0
    bent = product_decomposition(
        product, guiding=lambda x: np.where(x[..., -1] <= 5.0, x[..., -1], 5.0 + 2.0 * (x[..., -1] - 5.0)))
    assert bent.ray_residual <= 1e-6
    assert bent.support_excess() > 1e-5
    with pytest.raises(InvalidDecomposition):
        verify_disintegration(bent, lambda x: x[..., -1])
