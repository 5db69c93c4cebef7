import numpy as np
import pytest

from finsgap.core.errors import InvalidArgument, ModelDegenerate, ZeroSection
from finsgap.core.norms import (
    dual_norm, eval_norm, flat, fundamental_tensor, legendre, legendre_batch, reverse,
    reversibility_constant, unit_directions,
)
from finsgap.manifolds import (
    euclidean, minkowski_randers, quartic_minkowski, round_sphere_chart, shear_randers,
)


def make_randers():
    return minkowski_randers([0.5, 0.0])


def shipped_models():
    return [euclidean(2), make_randers(), quartic_minkowski(2, 0.3), shear_randers(0.5, 1.5),
            round_sphere_chart()]


def sample(model, rng, count=100):
    lo = np.array([max(a, -1.0) for a, _ in model.domain])
    hi = np.array([min(b, 1.0) for _, b in model.domain])
    x = rng.uniform(0.9 * lo, 0.9 * hi, size=(count, model.dim))
    v = rng.standard_normal((count, model.dim))
    return x, v


def test_euclidean_norm():
    assert eval_norm(euclidean(2), [0.0, 0.0], [3.0, 4.0]) == pytest.approx(5.0)


def test_randers_norm_is_asymmetric():
    F = make_randers()
    assert eval_norm(F, [0.0, 0.0], [1.0, 0.0]) == pytest.approx(1.5)
    assert eval_norm(F, [0.0, 0.0], [-1.0, 0.0]) == pytest.approx(0.5)


def test_norm_vanishes_only_at_zero():
    assert eval_norm(make_randers(), [0.0, 0.0], [0.0, 0.0]) == 0.0


def test_non_finite_input_rejected():
    with pytest.raises(InvalidArgument):
        eval_norm(euclidean(2), [0.0, 0.0], [np.nan, 1.0])


def test_randers_one_form_too_large():
    with pytest.raises(ModelDegenerate):
        minkowski_randers([1.0, 0.0])


@pytest.mark.parametrize("model", shipped_models(), ids=lambda m: m.name)
def test_homogeneity(model):
    rng = np.random.default_rng(1)
    x, v = sample(model, rng)
    c = rng.uniform(1e-3, 10.0, size=len(v))
    F = model.norm(x, v)
    assert np.all(np.abs(model.norm(x, c[:, None] * v) - c * F) <= 1e-10 * c * F)


@pytest.mark.parametrize("model", shipped_models(), ids=lambda m: m.name)
def test_strong_convexity(model):
    rng = np.random.default_rng(2)
    x, v = sample(model, rng)
    assert np.min(np.linalg.eigvalsh(model.tensor(x, v))) > 0.0


def test_euclidean_tensor_is_identity():
    g = fundamental_tensor(euclidean(3), np.zeros(3), [1.0, -2.0, 0.5])
    assert np.allclose(g.matrix, np.eye(3))


def test_tensor_reproduces_norm_squared():
    g = fundamental_tensor(make_randers(), [0.0, 0.0], [1.0, 0.0])
    assert g([1.0, 0.0], [1.0, 0.0]) == pytest.approx(2.25, rel=1e-8)


def test_randers_tensor_against_finite_differences():
    F = make_randers()
    x = np.zeros(2)
    v = np.array([0.0, 1.0])
    h = 1e-5
    L = lambda w: 0.5 * F.norm(x, w) ** 2
    eye = np.eye(2)
    oracle = np.array([[(L(v + h * (eye[i] + eye[j])) - L(v + h * (eye[i] - eye[j]))
                         - L(v - h * (eye[i] - eye[j])) + L(v - h * (eye[i] + eye[j]))) / (4 * h * h)
                        for j in range(2)] for i in range(2)])
    assert np.allclose(fundamental_tensor(F, x, v).matrix, oracle, atol=1e-6)


def test_tensor_at_zero_section():
    with pytest.raises(ZeroSection):
        fundamental_tensor(euclidean(2), [0.0, 0.0], [0.0, 0.0])


def test_dual_norm_examples():
    assert dual_norm(euclidean(2), [0.0, 0.0], [3.0, 4.0]) == pytest.approx(5.0)
    assert dual_norm(make_randers(), [0.0, 0.0], [1.0, 0.0]) == pytest.approx(2.0 / 3.0, rel=1e-8)


def test_legendre_examples():
    assert np.allclose(legendre(euclidean(2), [0.0, 0.0], [3.0, 4.0]), [3.0, 4.0])
    assert np.allclose(legendre(euclidean(2), [0.0, 0.0], [0.0, 0.0]), [0.0, 0.0])
    v = legendre(make_randers(), [0.0, 0.0], [1.0, 0.0])
    assert np.allclose(v, [2.0 / 3.0, 0.0], atol=1e-10)
    assert eval_norm(make_randers(), [0.0, 0.0], v) == pytest.approx(2.0 / 3.0, rel=1e-8)
    assert float(np.dot([1.0, 0.0], v)) == pytest.approx(4.0 / 9.0, rel=1e-8)


@pytest.mark.parametrize("model", shipped_models(), ids=lambda m: m.name)
def test_legendre_identities(model):
    rng = np.random.default_rng(3)
    x, alpha = sample(model, rng)
    v = legendre_batch(model, x, alpha)
    F = model.norm(x, v)
    F_star = dual_norm_of(model, x, alpha)
    assert np.allclose(F, F_star, rtol=1e-8)
    assert np.allclose(np.einsum("ij,ij->i", alpha, v), F_star ** 2, rtol=1e-8)


def dual_norm_of(model, x, alpha):
    return np.array([dual_norm(model, xi, ai) for xi, ai in zip(x, alpha)])


@pytest.mark.parametrize("model", [euclidean(2), make_randers(), shear_randers(0.5, 1.5)],
                         ids=lambda m: m.name)
def test_flat_then_legendre_roundtrip(model):
    rng = np.random.default_rng(4)
    x, v = sample(model, rng, count=50)
    alpha = np.array([flat(model, xi, vi).components for xi, vi in zip(x, v)])
    assert np.allclose(legendre_batch(model, x, alpha), v, rtol=1e-6, atol=1e-9)


def test_reversibility_constant():
    dirs = unit_directions(2, 64)
    origin = np.zeros((1, 2))
    assert reversibility_constant(euclidean(2), origin, dirs) == pytest.approx(1.0)
    assert reversibility_constant(make_randers(), origin, dirs) == pytest.approx(3.0, abs=1e-6)
    assert reversibility_constant(quartic_minkowski(2, 0.3), origin, dirs) == pytest.approx(1.0)


def test_reversibility_constant_needs_sample():
    with pytest.raises(InvalidArgument):
        reversibility_constant(euclidean(2), [])


def test_unit_directions_contain_axes():
    dirs = unit_directions(3, 20)
    for e in np.vstack([np.eye(3), -np.eye(3)]):
        assert np.any(np.all(np.isclose(dirs, e), axis=1))
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)


def test_reverse_structure():
    F = make_randers()
    back = reverse(F)
    assert eval_norm(back, [0.0, 0.0], [1.0, 0.0]) == pytest.approx(0.5)
    twice = reverse(back)
    rng = np.random.default_rng(5)
    v = rng.standard_normal((20, 2))
    assert np.allclose(twice.norm(np.zeros(2), v), F.norm(np.zeros(2), v))


def test_minkowski_triangle_inequality():
    F = quartic_minkowski(2, 0.3)
    rng = np.random.default_rng(6)
    v, w = rng.standard_normal((2, 200, 2))
    o = np.zeros(2)
    assert np.all(F.norm(o, v + w) <= F.norm(o, v) + F.norm(o, w) + 1e-10)
