import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from kondratiev.geometry import MultiElectronSpec, multi_electron_family
from kondratiev.mesh import GridFunction, build_radial_mesh, build_tensor_mesh
from kondratiev.norms import (
    BOUNDED,
    DIVERGING,
    INDETERMINATE,
    NormError,
    classify_sequence,
    knorm,
    knorm_table,
    masked_derivative,
    radial_gram,
    regularity_threshold,
)
from kondratiev.weights import WeightEvaluator, psi

W1 = WeightEvaluator(multi_electron_family(MultiElectronSpec(1, (-1.0,))))


def radial(fn, R=40.0, n=4000, gamma=2.0):
    m = build_radial_mesh(R, n, gamma)
    return GridFunction(m, fn(m.nodes))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 1000), st.floats(-2, 2), st.floats(-2, 2), st.integers(3, 8))
def test_masked_derivative_exact_on_quadratics(seed, b, c, hole):
    x = np.sort(np.random.default_rng(seed).uniform(0, 1, 20))
    x = np.unique(np.round(x, 6))
    f = 1 + b * x + c * x**2
    valid = np.ones(len(x), bool)
    valid[hole:hole + 2] = False
    d = masked_derivative(f, x, valid)
    ok = valid.copy()
    # nodes isolated between the hole and the end may lack a three-point stencil
    ok[:hole] &= hole >= 3
    np.testing.assert_allclose(d[ok], (b + 2 * c * x)[ok], atol=1e-7)
    assert np.all(d[~valid] == 0)


def test_masked_derivative_along_axis():
    x = np.linspace(0, 1, 7)
    f = np.outer(np.ones(3), x**2)
    d = masked_derivative(f, x, np.ones(7, bool), axis=1)
    np.testing.assert_allclose(d, np.outer(np.ones(3), 2 * x), atol=1e-12)


def test_radial_gram_values():
    keys, Q = radial_gram(1)
    assert keys == [(1, 0)] and np.allclose(Q, [[1.0]])
    keys, Q = radial_gram(2)
    assert keys == [(1, -1), (2, 0)]
    np.testing.assert_allclose(Q, [[1.8, 0.2], [0.2, 0.8]], atol=1e-12)


def test_radial_gram_against_hessian_average():
    """Average of the distinct second partials of f(|x|) from the explicit Hessian."""
    keys, Q = radial_gram(2)
    fp, fpp, r = 0.7, -1.3, 0.9
    k = 400
    i = np.arange(k) + 0.5
    z = 1 - 2 * i / k
    phi = np.pi * (1 + 5**0.5) * i
    n = np.stack([np.sqrt(1 - z**2) * np.cos(phi), np.sqrt(1 - z**2) * np.sin(phi), z], axis=1)
    H = fpp * n[:, :, None] * n[:, None, :] + (fp / r) * (np.eye(3) - n[:, :, None] * n[:, None, :])
    iu = np.triu_indices(3)
    ref = np.mean(np.sum(H[:, iu[0], iu[1]] ** 2, axis=1))
    vec = np.array([fp / r, fpp])
    assert vec @ Q @ vec == pytest.approx(ref, rel=1e-4)


def test_plain_l2_norm_of_ground_state():
    u = radial(lambda r: np.exp(-r / 2))
    assert knorm(u, W1, 0, 0.0) == pytest.approx(np.sqrt(8 * np.pi), rel=1e-5)


def test_weighted_first_order_norm_against_quadrature():
    u = radial(lambda r: np.exp(-r / 2), n=8000)
    a = 1.0
    dens = lambda r: 4 * np.pi * r**2 * (psi(r) ** (-2 * a) * np.exp(-r) + psi(r) ** (2 - 2 * a) * np.exp(-r) / 4)
    ref = integrate.quad(dens, 0, 40, points=[0.5, 2.0], limit=200)[0]
    assert knorm(u, W1, 1, a, exclusion_radius=0.0) ** 2 == pytest.approx(ref, rel=1e-4)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3), st.sampled_from([0, 1, 2]), st.floats(-1, 1.4))
def test_knorm_homogeneous(c, m, a):
    u = radial(lambda r: np.exp(-r / 2), n=400)
    cu = GridFunction(u.mesh, c * u.values)
    assert knorm(cu, W1, m, a) == pytest.approx(abs(c) * knorm(u, W1, m, a), rel=1e-10)


def test_knorm_triangle_inequality():
    u = radial(lambda r: np.exp(-r / 2), n=400)
    v = radial(lambda r: r * np.exp(-r), n=400)
    s = GridFunction(u.mesh, u.values + v.values)
    for m in (0, 1, 2):
        assert knorm(s, W1, m, 0.5) <= knorm(u, W1, m, 0.5) + knorm(v, W1, m, 0.5) + 1e-12


def test_report_rows_and_contributions():
    u = radial(lambda r: np.exp(-r / 2), n=400)
    rep = knorm_table(u, W1, 2, [0.0, 1.0])
    labels = sorted({lab for lab, _, _ in rep.rows()})
    assert labels == ["|alpha|=0", "|alpha|=1", "|alpha|=2"]
    total = np.sqrt(sum(v**2 for (lab, a), v in rep.contributions.items() if a == 1.0))
    assert total == pytest.approx(rep.totals[1.0])


def gaussian_norms(background):
    mesh = build_tensor_mesh(6, background, 0, 1.0)
    X = mesh.coordinates()
    u = GridFunction(mesh, np.exp(-np.sum(X**2, axis=1)))
    l2 = knorm(u, W1, 0, 0.0, exclusion_radius=0.0) ** 2
    return u, l2, knorm(u, W1, 1, 0.0, exclusion_radius=0.0) ** 2 - l2


def test_tensor_norm_of_gaussian():
    u, l2, _ = gaussian_norms(48)
    # integral of exp(-2|x|^2) over R^3 is (pi/2)^(3/2); the nucleus vertex itself is always dropped
    assert l2 + 0.25**3 == pytest.approx((np.pi / 2) ** 1.5, rel=1e-6)
    with pytest.raises(NormError):
        knorm(u, W1, 3, 0.0)


def test_tensor_gradient_term_converges():
    # at a = 0 the first-order term carries the weight r_S^2
    dens = lambda r: 4 * np.pi * r**2 * psi(r) ** 2 * 4 * r**2 * np.exp(-2 * r**2)
    ref = integrate.quad(dens, 0, 6, points=[0.5, 2.0], limit=200)[0]
    errs = [abs(gaussian_norms(bg)[2] - ref) for bg in (24, 48)]
    assert errs[1] < 0.06 * ref
    assert errs[0] / errs[1] > 3.0


def test_classify_sequence():
    assert classify_sequence([1.0, 1.01, 1.02]) == BOUNDED
    assert classify_sequence([1.0, 2.0, 4.0]) == DIVERGING
    assert classify_sequence([1.0, 1.3, 1.7]) == INDETERMINATE
    assert classify_sequence([0.0, 0.0, 0.0]) == BOUNDED


def test_threshold_brackets_known_exponent():
    # r exp(-r) lies in the m=2 space exactly for a < 5/2
    funcs = [radial(lambda r: r * np.exp(-r), R=20, n=n) for n in (500, 2000, 8000)]
    est = regularity_threshold(funcs, W1, 2, [2.0, 2.2, 2.8, 3.0])
    assert est.bounded_up_to == 2.2 and est.diverging_from == 2.8
    assert est.contains(2.5) and not est.contains(2.9)
    with pytest.raises(NormError):
        regularity_threshold(funcs[:2], W1, 2, [1.0])
    with pytest.raises(NormError):
        regularity_threshold(funcs, W1, 2, [])
