import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from lipspace.errors import DomainError
from lipspace.flatten import (
    FLATTEN_C,
    FlatteningMap,
    GagliardoExtension,
    Mollifier,
    gagliardo_extend,
    jacobian_lambda,
    kappa_map,
    lambda_map,
    verify_gagliardo_estimates,
)
from lipspace.geometry import GraphDomain


def bump_moment(k):
    # independent oracle: normalized 1-D bump moments by adaptive quadrature
    b = lambda t: np.exp(-1.0 / (1.0 - t * t)) if abs(t) < 1 else 0.0
    mass = quad(b, -1, 1, epsabs=1e-14)[0]
    return quad(lambda t: abs(t) ** k * b(t), -1, 1, epsabs=1e-14)[0] / mass


def test_mollifier_mass_and_symmetry():
    z = Mollifier()
    assert z.mass() == pytest.approx(1.0, abs=1e-10)
    t = np.linspace(-1.5, 1.5, 31)
    assert np.array_equal(z(t), z(-t))
    assert np.all(z(np.array([1.0, 1.2, -1.0])) == 0)
    # Gauss-Legendre across the kink of |t| is only accurate to ~1e-3
    assert z.abs_first_moment() == pytest.approx(bump_moment(1), rel=1e-3)
    assert Mollifier(dim=2).mass() == pytest.approx(1.0, abs=1e-10)


def test_extension_of_affine_is_exact():
    g = GraphDomain.affine(0.7, offset=0.2, N=8)
    X = np.array([[0.1, 0.3], [0.55, 1.2], [0.9, 0.0]])
    assert np.allclose(gagliardo_extend(g, X), g.phi(X[:, 0]), atol=1e-13)


def test_extension_of_kink():
    # sawtooth is |x'| near 0; only that kink is inside the window at x_n = 0.4
    g = GraphDomain.sawtooth(slope=1.0, N=8)
    val = gagliardo_extend(g, [[0.0, 0.4]])[0]
    assert val == pytest.approx(0.4 * bump_moment(1), rel=1e-9)
    assert val > 0


def test_extension_boundary_values():
    g = GraphDomain.sawtooth(slope=1.3, N=8)
    xp = np.linspace(0, 1, 17)
    X = np.stack([xp, np.zeros_like(xp)], 1)
    assert np.array_equal(gagliardo_extend(g, X), g.phi(xp))


def test_kink_calculus_matches_quadrature():
    g = GraphDomain.sawtooth(slope=1.0, N=8)
    ext = GagliardoExtension(g)
    rng = np.random.default_rng(3)
    X = np.c_[rng.uniform(0, 1, 40), rng.uniform(0.01, 0.8, 40)]
    # plain Gauss quadrature straddles kinks and is only accurate to ~1e-4
    assert np.allclose(ext.value(X), ext.value_by_quadrature(X), atol=3e-4)


def test_extension_rejects_lower_half():
    with pytest.raises(DomainError):
        gagliardo_extend(GraphDomain.flat(N=4), [[0.2, -0.1]])


def test_flat_map_is_identity():
    fm = FlatteningMap(GraphDomain.flat(N=8))
    assert fm.kappa0 == 1.0
    X = np.array([[0.2, 0.3], [0.7, 1.4]])
    assert np.allclose(lambda_map(fm, X), X, atol=1e-15)
    assert np.allclose(kappa_map(fm, X), X, atol=1e-15)
    assert np.allclose(jacobian_lambda(fm, X), np.eye(2))


def test_affine_maps():
    a = 0.4
    fm = FlatteningMap(GraphDomain.affine(a, N=8))
    assert fm.kappa0 == pytest.approx(1 + FLATTEN_C * a)
    x = np.array([[0.2, 0.3], [0.6, 0.9]])
    lam = fm.lam(x)
    assert np.allclose(lam[:, 1], fm.kappa0 * x[:, 1] + a * x[:, 0], atol=1e-13)
    X = np.array([[0.3, 0.8], [0.5, 1.1]])
    assert np.allclose(fm.kappa(X)[:, 1], (X[:, 1] - a * X[:, 0]) / fm.kappa0, atol=1e-10)
    assert np.allclose(fm.jacobian(x)[:, 1], [a, fm.kappa0], atol=1e-12)


def test_jacobian_against_central_differences():
    fm = FlatteningMap(GraphDomain.sawtooth(slope=1.0, N=8))
    x = np.array([0.5, 0.25])
    J = fm.jacobian(x)[0]
    h = 1e-5
    fd = np.zeros((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd[:, j] = (fm.lam(x + e)[0] - fm.lam(x - e)[0]) / (2 * h)
    assert np.abs(fd - J).max() / np.abs(J).max() <= 1e-6
    assert np.linalg.det(J) > 0


def test_roundtrip_and_comparability():
    g = GraphDomain.sawtooth(slope=1.0, N=8)
    fm = FlatteningMap(g)
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 1, (100, 2))
    X[:, 1] += g.phi(X[:, 0])
    assert np.abs(fm.lam(fm.kappa(X)) - X).max() <= 1e-9
    x = np.c_[rng.uniform(0, 1, 200), rng.uniform(1e-3, 1, 200)]
    assert np.abs(fm.kappa(fm.lam(x)) - x).max() <= 1e-9
    ratio = (fm.lam(x)[:, 1] - g.phi(x[:, 0])) / x[:, 1]
    c1, c2 = fm.comparability
    assert 0 < c1 <= ratio.min() and ratio.max() <= c2
    assert np.all(np.linalg.det(fm.jacobian(x)) > 0)


def test_kappa_below_graph():
    fm = FlatteningMap(GraphDomain.sawtooth(N=8))
    with pytest.raises(DomainError):
        fm.kappa([[0.5, 0.1]])


@settings(max_examples=20, deadline=None)
@given(slope=st.floats(0.1, 3.0), x1=st.floats(0, 1), xn=st.floats(1e-3, 2.0))
def test_roundtrip_property(slope, x1, xn):
    fm = FlatteningMap(GraphDomain.sawtooth(slope=slope, N=8))
    x = np.array([[x1, xn]])
    assert np.abs(fm.kappa(fm.lam(x)) - x).max() <= 1e-9


def test_affine_estimates_are_absolute_zero():
    fm = FlatteningMap(GraphDomain.affine(0.5, N=8))
    rep = verify_gagliardo_estimates(fm, np.array([[0.3, 0.2], [0.6, 0.7]]))
    assert rep.absolute
    assert all(v < 1e-12 for v in rep.derivative_constants.values())


def test_sawtooth_estimates_scale_invariant():
    pts = np.random.default_rng(1).uniform(0.05, 1, (40, 2))
    r1 = verify_gagliardo_estimates(FlatteningMap(GraphDomain.sawtooth(slope=1.0, N=16)), pts)
    r2 = verify_gagliardo_estimates(FlatteningMap(GraphDomain.sawtooth(slope=2.0, N=16)), pts)
    # the step gradient +-1 has [grad phi]_BMO = 1 (oscillation of a +-1 step)
    assert r1.grad_phi_bmo == pytest.approx(1.0, rel=1e-3)
    assert np.isfinite(r1.grad_bmo_ratio) and r1.grad_bmo_ratio > 0
    for k in r1.derivative_constants:
        assert r2.derivative_constants[k] == pytest.approx(r1.derivative_constants[k], rel=1e-9)
    assert r2.grad_bmo_ratio == pytest.approx(r1.grad_bmo_ratio, rel=1e-6)


def test_three_dimensional_flat_extension():
    g = GraphDomain.flat(n=3, N=4)
    fm = FlatteningMap(g)
    X = np.array([[0.2, 0.4, 0.3], [0.8, 0.1, 1.0]])
    assert np.allclose(fm.lam(X), X, atol=1e-14)
