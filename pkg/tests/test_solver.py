import numpy as np
import pytest

import lipspace.solver as solver
from lipspace.errors import ParameterError, PreconditionError
from lipspace.geometry import GraphDomain, PolygonDomain
from lipspace.solver import (
    EllipticOperator,
    a_priori_family,
    coercivity_estimate,
    dirichlet_from_expression,
    exact_error,
    mazya_counterexample,
    mazya_p_star,
    mazya_theta,
    neumann_iteration,
    neumann_sweep,
    poisson_family,
    solve_dirichlet,
    trace_equivalence_check,
)
from lipspace.spaces import SpaceParams, WhitneyArray, expression_derivatives

LSHAPE = PolygonDomain.lshape()
HARMONIC = "X1**3 - 3*X1*X2**2"
BIHARMONIC = "X1**2*X2 + X2**3 + X1*X2"


def solve_expr(op, expr, h, F=None, dom=LSHAPE):
    b = dom.boundary(spacing=h / 4)
    rep = solve_dirichlet(op, dom, dirichlet_from_expression(expr, op.m, b), F=F, h=h)
    der = expression_derivatives(expr, 2)
    return rep, exact_error(rep, lambda X: der((0, 0), X))


def test_operator_constructors():
    lap = EllipticOperator.laplacian()
    assert lap.m == 1 and len(lap.coeffs) == 2
    X = np.zeros((3, 2))
    assert np.all(lap.coefficient((1, 0), (1, 0), X) == 1)
    assert np.all(lap.coefficient((1, 0), (0, 1), X) == 0)
    assert EllipticOperator.bilaplacian().sup_norm(X) == pytest.approx(2.0)
    with pytest.raises(ParameterError):
        EllipticOperator(1, 2, {((2, 0), (1, 0)): 1.0})


def test_coercivity():
    assert coercivity_estimate(EllipticOperator.diagonal(2), LSHAPE, trials=3).estimate == pytest.approx(1.0, abs=0.05)
    half = EllipticOperator.laplacian(a=0.5)
    rep = coercivity_estimate(half, LSHAPE, trials=3)
    assert rep.verified and rep.estimate == pytest.approx(0.5, abs=0.03)
    neg = EllipticOperator.laplacian(a=-1.0)
    assert not coercivity_estimate(neg, LSHAPE, trials=2).verified


def test_zero_data_gives_zero():
    for op in (EllipticOperator.laplacian(), EllipticOperator.bilaplacian()):
        rep, _ = solve_expr(op, "0", 1 / 16)
        assert np.abs(rep.solution.values).max() == 0
        assert rep.energy == 0


def test_harmonic_recovery():
    errs = [solve_expr(EllipticOperator.laplacian(), HARMONIC, h)[1] for h in (1 / 16, 1 / 32)]
    assert errs[-1] < 1e-3
    assert errs[1] < errs[0] / 2


def test_biharmonic_recovery():
    errs = [solve_expr(EllipticOperator.bilaplacian(), BIHARMONIC, h)[1] for h in (1 / 16, 1 / 32)]
    assert errs[-1] < 1e-2
    assert errs[1] < errs[0]


def test_square_quadratic_limited_by_boundary_interpolation():
    # the 5-point Laplacian is exact on quadratics; the remaining error is the
    # linear interpolation of boundary data between boundary nodes
    op = EllipticOperator.laplacian()
    sq = PolygonDomain.square()
    der = expression_derivatives("X1**2 - X2**2 + X1", 2)
    errs = []
    for spacing in (1 / 64, 1 / 128, 1 / 256):
        g = dirichlet_from_expression("X1**2 - X2**2 + X1", 1, sq.boundary(spacing=spacing))
        rep = solve_dirichlet(op, sq, g, h=1 / 16)
        errs.append(exact_error(rep, lambda X: der((0, 0), X)))
    assert np.all(np.log2(np.array(errs[:-1]) / errs[1:]) > 1.8)


def test_energy_identity():
    b = LSHAPE.boundary(spacing=1 / 128)
    F = lambda X: np.ones(X.shape[0])
    rep = solve_dirichlet(EllipticOperator.laplacian(), LSHAPE, dirichlet_from_expression("0", 1, b), F=F, h=1 / 32)
    assert rep.energy > 0
    assert rep.energy == pytest.approx(rep.pairing, rel=1e-10)


def test_rejects_bad_data():
    b = LSHAPE.boundary(spacing=1 / 64)
    g = dirichlet_from_expression(HARMONIC, 1, b)
    g.components[0][3] = np.nan
    with pytest.raises(PreconditionError):
        solve_dirichlet(EllipticOperator.laplacian(), LSHAPE, g, h=1 / 16)
    arr = WhitneyArray.from_expression(BIHARMONIC, 2, b)
    bad = dict(arr.components)
    bad[(1, 0)] = bad[(1, 0)] + 1.0
    with pytest.raises(PreconditionError):
        solve_dirichlet(EllipticOperator.bilaplacian(), LSHAPE, WhitneyArray(2, b, bad), h=1 / 16)
    with pytest.raises(ParameterError):
        solve_dirichlet(EllipticOperator.bilaplacian(), LSHAPE, g, h=1 / 16)
    with pytest.raises(ParameterError):
        solve_dirichlet(EllipticOperator.laplacian(), GraphDomain.flat(N=4), g, h=1 / 16)


@pytest.mark.parametrize("op", [EllipticOperator.laplacian(), EllipticOperator.bilaplacian()], ids=["m1", "m2"])
def test_a_priori_bracket(op):
    rep = a_priori_family(op, LSHAPE, h=1 / 16)
    assert len(rep.constants) == 10
    assert all(np.isfinite(c) and c > 0 for c in rep.constants)
    assert rep.bracket < 20


def test_neumann_contraction_grows_linearly():
    reps = neumann_sweep((0.01, 0.05, 0.1), N=32)
    for r in reps:
        assert r.converged and not r.failed
        assert r.solution_error < 1e-8
        assert r.contraction <= r.bound
    rates = np.array([r.contraction for r in reps])
    assert np.all(np.diff(rates) > 0)
    # factor / delta stays bounded: at most linear growth
    per = rates / np.array([0.01, 0.05, 0.1])
    assert per.max() / per.min() < 2


def test_neumann_failure_reported():
    r = neumann_iteration(0.9, N=32)
    assert r.failed and not r.converged
    r0 = neumann_iteration(0.0, N=16)
    assert r0.converged and r0.iterations <= 1
    with pytest.raises(ParameterError):
        neumann_iteration(1.0)


def test_poisson_family_is_harmonic():
    X = np.array([[0.3, 0.4], [-0.7, 0.9]])
    h = 1e-3
    for U, grad in poisson_family():
        lap = sum(U(X + h * e) + U(X - h * e) - 2 * U(X) for e in np.eye(2)) / h**2
        assert np.abs(lap).max() < 1e-4
        fd = np.stack([(U(X + h * e) - U(X - h * e)) / (2 * h) for e in np.eye(2)], -1)
        assert np.allclose(grad(X), fd, atol=1e-5)


def test_trace_equivalence_bracket_and_scaling():
    pr = SpaceParams(2, s=0.5)
    fam = poisson_family()
    rep = trace_equivalence_check(fam, pr)
    assert len(rep.ratios) == 5 and rep.bracket < 20
    scaled = [(lambda X, U=U: 3 * U(X), lambda X, g=g: 3 * g(X)) for U, g in fam]
    assert np.allclose(trace_equivalence_check(scaled, pr).ratios, rep.ratios, rtol=1e-12)
    zero = [(lambda X: 0 * X[..., 0], lambda X: 0 * X)]
    assert trace_equivalence_check(zero, pr, h=1 / 16).skipped == 1


def test_mazya_exponents():
    assert mazya_theta(3, 1.0) == pytest.approx(0.8638034, abs=1e-6)
    assert mazya_p_star(3, 1.0) == pytest.approx(2.640388, abs=1e-5)
    ps = [mazya_p_star(3, e) for e in (1, 0.1, 0.01)]
    assert ps[0] > ps[1] > ps[2] > 2
    assert mazya_p_star(3, 1e-8) - 2 < 1e-3
    with pytest.raises(ParameterError):
        mazya_theta(3, 0.0)


def test_mazya_theta_is_indicial_root():
    # independent oracle: strong form of the fourth-order operator on r^theta, by sympy
    import sympy as sp

    x, y, z, t = sp.symbols("x y z theta", positive=True)
    X = [x, y, z]
    r = sp.sqrt(x**2 + y**2 + z**2)
    a, b, c = EllipticOperator.mazya(3, 1.0).mazya_abc
    H = sp.hessian(r**t, X)
    lap = sum(H[i, i] for i in range(3))
    rad = sum(X[i] * X[j] * H[i, j] for i in range(3) for j in range(3)) / r**2
    w1, w2 = a * lap + b * rad, b * lap + c * rad
    strong = sum(sp.diff(w1, v, 2) for v in X)
    strong += sum(sp.diff(X[i] * X[j] / r**2 * w2, X[i], X[j]) for i in range(3) for j in range(3))
    poly = sp.Poly(sp.expand(sp.simplify(strong.subs({y: 0, z: 0}).subs(x, 1))), t)
    roots = sorted(float(sp.re(q)) for q in sp.nroots(poly))
    assert mazya_theta(3, 1.0) == pytest.approx(roots[2], abs=1e-10)


def test_mazya_weak_residual(monkeypatch):
    rep = mazya_counterexample(3, 1.0)
    assert rep.residual < 1e-4
    # control: an exponent off the indicial roots is not a weak solution
    monkeypatch.setattr(solver, "mazya_theta", lambda n, eps: 0.7)
    assert mazya_counterexample(3, 1.0, trials=3).residual > 100 * rep.residual


def test_mazya_operator_coefficients():
    op = EllipticOperator.mazya(3, 1.0)
    assert op.mazya_abc == (2.0, 3, 9)
    with pytest.raises(ParameterError):
        EllipticOperator.mazya(3, -1.0)
