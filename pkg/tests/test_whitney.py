import numpy as np
import pytest

from lipspace.errors import PreconditionError, ResolutionError, UnsupportedOrderError
from lipspace.geometry import GraphDomain, regularized_distance
from lipspace.spaces import GridFunction, SpaceParams, WhitneyArray, besov_norm, expression_derivatives, remainder_seminorms
from lipspace.whitney import (
    CoKernelParams,
    DirichletData,
    compat_check,
    dirichlet_to_whitney,
    extend_besov,
    extension_values,
    kernel_mass,
    mollified_lift,
    multiply_cutoff,
    normal_derivatives,
    remainder_identity_check,
    smooth_cutoff,
    trace_array,
    whitney_to_dirichlet,
)

EXPR = "sin(X1)*exp(X2)"
SAW = GraphDomain.sawtooth(N=8)
FLAT = GraphDomain.flat(N=8)
RES = [(1 / 32, 8), (1 / 64, 16), (1 / 128, 32)]


def grid(expr, dom, h):
    der = expression_derivatives(expr, 2)
    return GridFunction.from_callable(lambda X: der((0, 0), X), dom, h, margin=3)


def orders(errs):
    e = np.asarray(errs)
    return np.log2(e[:-1] / e[1:])


def max_diff(A, B):
    return max(float(np.abs(A[a] - B[a]).max()) for a in A.indices())


def test_trace_of_simple_functions():
    b = SAW.boundary(nodes_per_facet=4)
    A = trace_array(grid("1", SAW, 1 / 32), b, 2)
    assert np.allclose(A[(0, 0)], 1) and np.allclose(A[(1, 0)], 0) and np.allclose(A[(0, 1)], 0)
    A = trace_array(grid("X2", SAW, 1 / 32), b, 2)
    assert np.allclose(A[(0, 0)], b.nodes[:, 1], atol=1e-12)
    assert np.allclose(A[(0, 1)], 1) and np.allclose(A[(1, 0)], 0, atol=1e-12)
    bf = FLAT.boundary(nodes_per_facet=4)
    A = trace_array(grid("X1**2", FLAT, 1 / 32), bf, 2)
    assert np.allclose(A[(0, 0)], bf.nodes[:, 0] ** 2, atol=1e-12)
    assert np.allclose(A[(1, 0)], 2 * bf.nodes[:, 0], atol=1e-12)


def test_trace_needs_margin():
    b = SAW.boundary(nodes_per_facet=2)
    U = GridFunction.from_callable(lambda X: X[..., 0], SAW, 1 / 16, margin=0)
    with pytest.raises(ResolutionError):
        trace_array(U, b, 3)


def test_compat_of_traces_is_second_order():
    errs = []
    for h, npf in RES:
        A = trace_array(grid(EXPR, SAW, h), SAW.boundary(nodes_per_facet=npf), 2)
        rep = compat_check(A, 10 * h**2 * np.e)
        assert rep.passed
        errs.append(rep.max_residual)
    assert np.all(orders(errs) > 1.8)


def test_compat_detects_injected_violation():
    b = SAW.boundary(nodes_per_facet=8)
    arr = WhitneyArray.from_expression(EXPR, 2, b)
    bad = dict(arr.components)
    bad[(1, 0)] = bad[(1, 0)].copy()
    bad[(1, 0)][17] += 1.0
    rep = compat_check(WhitneyArray(2, b, bad), 1e-2)
    assert not rep.passed and rep.max_residual > 0.5


def test_compat_m1_vacuous():
    arr = WhitneyArray.from_expression(EXPR, 1, SAW.boundary())
    assert compat_check(arr, 0.0).passed


def test_dirichlet_to_whitney_hand_cases():
    b = FLAT.boundary(nodes_per_facet=4)
    N = len(b)
    W = dirichlet_to_whitney(DirichletData(2, b, [b.nodes[:, 0].copy(), np.zeros(N)]))
    assert np.allclose(W[(1, 0)], 1) and np.allclose(W[(0, 1)], 0)
    W = dirichlet_to_whitney(DirichletData(2, b, [np.full(N, 4.0), np.zeros(N)]))
    assert np.allclose(W[(0, 0)], 4) and np.allclose(W[(1, 0)], 0) and np.allclose(W[(0, 1)], 0)
    # X_n^2 on the flat boundary: all data vanish
    g = normal_derivatives(grid("X2**2", FLAT, 1 / 32), b, 2)
    W = dirichlet_to_whitney(g)
    assert max(np.abs(W[a]).max() for a in W.indices()) < 1e-12


def test_dirichlet_to_whitney_order_limit():
    b = FLAT.boundary(nodes_per_facet=4)
    with pytest.raises(UnsupportedOrderError):
        dirichlet_to_whitney(DirichletData(4, b, [np.zeros(len(b))] * 4))


def test_whitney_to_dirichlet_hand_cases():
    b = FLAT.boundary(nodes_per_facet=4)
    g = whitney_to_dirichlet(WhitneyArray.from_expression("X2", 2, b))
    assert np.allclose(g[0], 0) and np.allclose(g[1], -1)
    z = whitney_to_dirichlet(WhitneyArray.zeros(3, b))
    assert all(np.all(c == 0) for c in z.components)


def test_normal_derivatives_simple():
    bf = FLAT.boundary(nodes_per_facet=4)
    g = normal_derivatives(grid("X2", FLAT, 1 / 32), bf, 2)
    assert np.allclose(g[0], 0, atol=1e-12) and np.allclose(g[1], -1)
    g = normal_derivatives(grid("2.5", FLAT, 1 / 32), bf, 3)
    assert np.allclose(g[0], 2.5) and np.allclose(g[1], 0) and np.allclose(g[2], 0)
    bs = SAW.boundary(nodes_per_facet=4)
    g = normal_derivatives(grid("X1 + X2", SAW, 1 / 32), bs, 2)
    # on rising facets nu = (1, -1)/sqrt 2, on falling ones (-1, -1)/sqrt 2
    expect = np.where(bs.normals[:, 0] < 0, -np.sqrt(2), 0.0)
    assert np.allclose(g[1], expect, atol=1e-10)


def test_normal_derivatives_converge_and_roundtrip():
    errs_g, errs_w = [], []
    for h, npf in RES:
        b = SAW.boundary(nodes_per_facet=npf)
        ex = WhitneyArray.from_expression(EXPR, 2, b)
        g = normal_derivatives(grid(EXPR, SAW, h), b, 2)
        errs_g.append(g.max_abs_diff(whitney_to_dirichlet(ex)))
        errs_w.append(max_diff(dirichlet_to_whitney(g), ex))
    assert np.all(orders(errs_g) > 0.9)
    # the normal/tangential decomposition reproduces D^alpha U to O(h)
    assert np.all(orders(errs_w) > 0.9)


@pytest.mark.parametrize("m", [2, 3])
def test_roundtrip_exact_on_flat(m):
    # tangential gradients are second-order differences, exact for data quadratic in X1
    b = FLAT.boundary(nodes_per_facet=8)
    arr = WhitneyArray.from_expression("X1**2*X2 + X1**2 + X2**2*X1 + X2**3", m, b)
    g = whitney_to_dirichlet(arr)
    assert max_diff(dirichlet_to_whitney(g), arr) < 1e-12
    assert whitney_to_dirichlet(dirichlet_to_whitney(g)).max_abs_diff(g) < 1e-12


def test_roundtrip_sawtooth_first_order():
    errs = []
    for npf in (8, 16, 32):
        arr = WhitneyArray.from_expression(EXPR, 2, SAW.boundary(nodes_per_facet=npf))
        errs.append(max_diff(dirichlet_to_whitney(whitney_to_dirichlet(arr)), arr))
    assert np.all(orders(errs) > 0.9)


def test_multiply_cutoff():
    b = SAW.boundary(nodes_per_facet=8)
    arr = WhitneyArray.from_expression(EXPR, 2, b)
    one = expression_derivatives("1", 2)
    zero = expression_derivatives("0", 2)
    assert max_diff(multiply_cutoff(one, arr), arr) == 0
    assert multiply_cutoff(zero, arr).max_abs() == 0
    psi = expression_derivatives("X1", 2)
    errs = []
    for h, npf in RES:
        b = SAW.boundary(nodes_per_facet=npf)
        A = trace_array(grid(EXPR, SAW, h), b, 2)
        T = trace_array(grid(f"X1*{EXPR}", SAW, h), b, 2)
        errs.append(max_diff(multiply_cutoff(psi, A), T))
    assert np.all(orders(errs) > 1.8)


def test_mollified_lift_affine_data_is_exact():
    b = FLAT.boundary(nodes_per_facet=16)
    arr = WhitneyArray.from_expression("2 + 3*X1 - X2 + X1*X2", 2, b)
    X = np.c_[np.linspace(0.3, 0.7, 9), np.linspace(0.1, 0.8, 9)]
    exact = 2 + 3 * X[:, 0] - X[:, 1] + X[:, 0] * X[:, 1]
    for eps in (0.2, 0.05):
        F = mollified_lift(arr, FLAT, eps)
        assert F.compatible
        assert np.allclose(F(X), exact, atol=1e-12)


def test_mollified_lift_zero_and_convergence():
    b = FLAT.boundary(nodes_per_facet=16)
    assert np.all(mollified_lift(WhitneyArray.zeros(2, b), FLAT, 0.1)(b.nodes) == 0)
    arr = WhitneyArray.from_expression("sin(2*pi*X1)", 2, b)
    errs = []
    for eps in (0.2, 0.1, 0.05, 0.025):
        tr = mollified_lift(arr, FLAT, eps)(b.nodes)
        errs.append(np.sqrt(np.sum((tr - arr[(0, 0)]) ** 2 * b.weights)))
    assert np.all(np.diff(errs) < 0)
    assert np.all(orders(errs) >= 1)


def test_mollified_lift_rejects_incompatible():
    b = SAW.boundary(nodes_per_facet=8)
    arr = WhitneyArray.from_expression(EXPR, 2, b)
    bad = dict(arr.components)
    bad[(0, 1)] = bad[(0, 1)] + 1.0
    with pytest.raises(PreconditionError):
        mollified_lift(WhitneyArray(2, b, bad), SAW, 0.1)


def test_cutoff_profile():
    r = np.array([0.0, 0.5, 1.0, 1.5, 2.0, 3.0])
    eta = smooth_cutoff(r)
    assert eta[0] == eta[1] == eta[2] == 1
    assert 0 < eta[3] < 1 and eta[4] == eta[5] == 0


def test_kernel_unit_mass_and_support():
    b = SAW.boundary(nodes_per_facet=32, pad_facets=2)
    rng = np.random.default_rng(0)
    X = np.c_[rng.uniform(0.1, 0.9, 30), rng.uniform(0.55, 1.0, 30)]
    mass, support, rho = kernel_mass(b, X, SAW)
    assert np.allclose(mass, 1, atol=1e-8)
    assert np.all(support < 2 * rho)
    ker = CoKernelParams()
    rr = regularized_distance(SAW, X)
    assert np.all(2 * ker.kappa * rr >= rho)


def test_extension_reproduces_constants_and_affine():
    bp = SAW.boundary(nodes_per_facet=16, pad_facets=2)
    X = np.c_[np.linspace(0.1, 0.9, 7), np.linspace(0.6, 0.95, 7)]
    c = WhitneyArray.from_expression("3", 1, bp)
    assert np.allclose(extension_values(c, X, SAW), 3.0, atol=1e-12)
    aff = WhitneyArray.from_expression("1 + 2*X1 - 0.5*X2", 2, bp)
    assert np.allclose(extension_values(aff, X, SAW), 1 + 2 * X[:, 0] - 0.5 * X[:, 1], atol=1e-12)


def test_extension_trace_roundtrip_flat():
    # trace of E f reproduces the array; the error shrinks under refinement
    errs = []
    for h, npf in [(1 / 32, 16), (1 / 64, 32)]:
        b = FLAT.boundary(nodes_per_facet=npf)
        arr = WhitneyArray.from_expression(EXPR, 2, b)
        E = extend_besov(WhitneyArray.from_expression(EXPR, 2, FLAT.boundary(nodes_per_facet=npf, pad_facets=2)), FLAT, h)
        T = trace_array(E, b, 2)
        errs.append(max(np.abs(T[a] - arr[a]).max() / np.abs(arr[a]).max() for a in arr.indices()))
    assert errs[-1] < 0.05 and errs[-1] < errs[0]


def test_null_space_function_has_zero_trace():
    # rho^2 * bump on the flat boundary: all traces of order <= 1 vanish
    errs = []
    for h in (1 / 32, 1 / 64, 1 / 128):
        U = GridFunction.from_callable(lambda X: X[..., 1] ** 2 * np.exp(-4 * ((X[..., 0] - 0.5) ** 2 + (X[..., 1] - 0.5) ** 2)), FLAT, h, margin=3)
        errs.append(trace_array(U, FLAT.boundary(nodes_per_facet=4), 2).max_abs())
    assert np.all(orders(errs) > 1.8)


@pytest.mark.parametrize("m", [2, 3])
def test_remainder_identity(m):
    der = expression_derivatives(EXPR, 2)
    pairs = np.random.default_rng(0).uniform(0, 1, (12, 2))
    rep = remainder_identity_check(der, SAW, m, pairs)
    assert rep.max_abs_error <= 1e-5


def test_remainder_estimate_constant_finite():
    b = FLAT.boundary(nodes_per_facet=4)
    pr = SpaceParams(2, s=0.5, m=2)
    consts = []
    for expr in ("sin(X1)*exp(X2)", "cos(3*X1)", "X1**3 + X2", "exp(X1)*X2"):
        arr = WhitneyArray.from_expression(expr, 2, b)
        lhs = remainder_seminorms(arr, pr)[(0, 0)]
        rhs = sum(besov_norm(arr[g], b, pr, periodic=False) for g in [(1, 0), (0, 1)])
        consts.append(lhs / rhs)
    assert np.all(np.isfinite(consts)) and max(consts) < 10
