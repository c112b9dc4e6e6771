"""The ``lipspace`` command line front end.

Every subcommand prints its result as JSON on stdout.  With ``--out DIR`` it
also writes ``DIR/<command>.csv`` (flat table, floats in ``repr`` form so the
bytes only depend on the inputs and the seed) and ``DIR/<command>.json`` (an
envelope with inputs, versions, seed and wall time).

Exit codes: 0 ok, 1 computational failure (the module error is printed as
JSON on stderr), 2 usage error.
"""

import argparse
import csv
import io
import json
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from .errors import LipspaceError

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class UsageError(Exception):
    pass


def _floats(text):
    try:
        vals = [float(t) for t in str(text).replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"not a list of numbers: {text!r}")
    return vals


def _sweep(values, name):
    if isinstance(values, str):
        values = _floats(values)
    vals = [float(v) for v in (values if isinstance(values, (list, tuple)) else [values])]
    if not vals:
        raise UsageError(f"sweep list {name} is empty")
    return vals


def _params(args, m=1):
    from .spaces import SpaceParams

    from .errors import ParameterError

    if (args.s is None) == (args.a is None):
        raise UsageError("give exactly one of --s and --a")
    try:
        return SpaceParams(args.p, a=args.a, s=args.s, m=m)
    except ParameterError as e:
        raise UsageError(str(e))


def _graph(args):
    from .geometry import GraphDomain, load_domain

    if args.domain_file:
        with open(args.domain_file) as fh:
            return load_domain(fh.read())
    if args.domain == "flat":
        return GraphDomain.flat(N=args.N)
    if args.domain == "sawtooth":
        return GraphDomain.sawtooth(slope=args.slope, N=args.N)
    raise UsageError(f"unknown graph domain {args.domain!r}")


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# subcommands: each returns (result dict, csv header, csv rows)
# ---------------------------------------------------------------------------


def cmd_bmo(args):
    from .geometry import bmo_seminorm

    radii = _sweep(args.radii, "radii")
    fixture = "step" if args.step else args.fixture
    n = args.samples
    if fixture == "step":
        x = (np.arange(n) + 0.5) / n * 2 - 1
        v = (x > 0).astype(float)
        centers = np.linspace(-0.3, 0.3, 241)
    elif fixture == "sawtooth-gradient":
        x = (np.arange(n) + 0.5) / n * 2 - 1
        v = np.where(np.floor(2 * x) % 2 == 0, args.slope, -args.slope)
        centers = np.linspace(-0.5, 0.5, 241)
    elif fixture == "log":
        x = (np.arange(n) + 0.5) / n
        v = np.log(x)
        centers = x[:: max(1, n // 40)]
    else:
        raise UsageError(f"unknown fixture {fixture!r}")
    w = np.full(n, (x[-1] - x[0]) / (n - 1))
    rep = bmo_seminorm(x[:, None], v, radii, weights=w, centers=centers[:, None], star=not args.no_star)
    res = {"fixture": fixture, "seminorm": rep.seminorm, "star_value": rep.star_value}
    rows = [(r, rep.table[r], rep.star_table.get(r, float("nan"))) for r in sorted(rep.table)]
    return res, ["radius", "sup_oscillation", "sup_double_mean"], rows


def cmd_besov(args):
    from .spaces import WhitneyArray, besov_norm, besov_seminorm, expression_derivatives, whitney_besov_norm

    dom = _graph(args)
    params = _params(args, m=args.m)
    b = dom.boundary(nodes_per_facet=args.nodes_per_facet)
    if args.m == 1:
        der = expression_derivatives(args.expr, dom.n)
        f = der((0,) * dom.n, b.nodes)
        res = {"seminorm": besov_seminorm(f, b, params), "norm": besov_norm(f, b, params)}
    else:
        arr = WhitneyArray.from_expression(args.expr, args.m, b)
        res = {"norm": whitney_besov_norm(arr, params)}
    res.update(params.to_dict())
    rows = [(k, v) for k, v in res.items() if not isinstance(v, str)]
    return res, ["quantity", "value"], rows


def cmd_whitney_roundtrip(args):
    from .spaces import WhitneyArray
    from .whitney import compat_check, dirichlet_to_whitney, extend_besov, trace_array, whitney_to_dirichlet

    dom = _graph(args)
    rows = []
    for h in _sweep(args.h, "h"):
        npf = max(4, int(round(dom.h / h / 2)))
        b = dom.boundary(nodes_per_facet=npf)
        arr = WhitneyArray.from_expression(args.expr, args.m, b)
        W = dirichlet_to_whitney(whitney_to_dirichlet(arr))
        rt = max(float(np.abs(W[a] - arr[a]).max()) for a in arr.indices())
        comp = compat_check(arr, 1.0).max_residual
        ext = float("nan")
        if args.extension:
            arrp = WhitneyArray.from_expression(args.expr, args.m, dom.boundary(nodes_per_facet=npf, pad_facets=2))
            T = trace_array(extend_besov(arrp, dom, h, margin=2), b, args.m)
            ext = max(float(np.abs(T[a] - arr[a]).max() / max(np.abs(arr[a]).max(), 1e-300)) for a in arr.indices())
        rows.append((h, npf, rt, comp, ext))
    res = {"rows": rows, "m": args.m, "expr": args.expr}
    return res, ["h", "nodes_per_facet", "dirichlet_roundtrip", "compat_residual", "extension_rel_error"], rows


def cmd_flatten_verify(args):
    from .flatten import FlatteningMap, verify_gagliardo_estimates
    from .geometry import GraphDomain

    rng = np.random.default_rng(args.seed)
    rows = []
    for slope in _sweep(args.slope, "slope"):
        dom = GraphDomain.sawtooth(slope=slope, N=args.N)
        fm = FlatteningMap(dom)
        X = rng.uniform(0, 1, (args.points, 2))
        X[:, 1] += dom.phi(X[:, 0]) + 0.01
        rt = float(np.abs(fm.lam(fm.kappa(X)) - X).max())
        pts = rng.uniform(0.05, 1, (50, 2))
        rep = verify_gagliardo_estimates(fm, pts)
        rows.append((slope, rt, rep.grad_phi_bmo, rep.grad_T_bmo, rep.grad_bmo_ratio, rep.value_constant))
    res = {"rows": rows, "max_roundtrip": max(r[1] for r in rows)}
    return res, ["slope", "roundtrip_residual", "grad_phi_bmo", "grad_T_bmo", "ratio", "value_constant"], rows


def cmd_opnorm_sweep(args):
    from .halfspace_ops import LogGrid, blowup_sweep

    s_list = _sweep(args.s_list, "s_list")
    p_list = _sweep(args.p_list, "p_list")
    T, du = args.grid
    rows = blowup_sweep(args.operator, s_list, p_list, LogGrid(T=T, du=du), trials=args.trials, seed=args.seed)
    ratios = [r[4] for r in rows]
    res = {"operator": args.operator, "rows": rows, "max_over_min": max(ratios) / min(ratios)}
    return res, ["s", "p", "empirical_norm", "bound_expression", "ratio"], rows


def cmd_lemma1(args):
    from .halfspace_ops import lemma1_verify

    r = lemma1_verify(
        args.N, args.eps, args.delta, _sweep(args.a, "a"), _sweep(args.b, "b"), _sweep(args.zeta, "zeta"), epsrel=args.epsrel
    )
    res = {"lhs": r.lhs, "ratio": r.ratio, "error": r.error}
    return res, ["lhs", "ratio", "error"], [(r.lhs, r.ratio, r.error)]


def cmd_green_residual(args):
    from .green import ModelOperator, residual_decay_check

    op = ModelOperator(args.op, args.n)
    k = args.grid
    if k < 1:
        raise UsageError("--grid must be positive")
    # k x-points and k y-points on two transversal lines in the half-space
    i = np.arange(k, dtype=float)
    xs = np.stack([0.3 * i, np.full(k, 0.2), 0.1 + 0.2 * i], -1)
    ys = np.stack([0.15 + 0.3 * i, np.full(k, 1.0), 0.3 + 0.25 * i], -1)
    if op.n == 2:
        xs, ys = xs[:, [0, 2]], ys[:, [0, 2]]
    rep = residual_decay_check(op, xs, ys)
    text = rep.to_csv()
    rows = list(csv.reader(io.StringIO(text)))
    res = {"op": args.op, "n": args.n, "sup": rep.sup, "pairs": k * k}
    return res, rows[0], rows[1:]


def cmd_solve(args):
    from .geometry import PolygonDomain, load_domain
    from .solver import EllipticOperator, dirichlet_from_expression, exact_error, solve_dirichlet

    ops = {
        "laplacian": EllipticOperator.laplacian,
        "bilaplacian": EllipticOperator.bilaplacian,
        "diagonal1": lambda: EllipticOperator.diagonal(1),
        "diagonal2": lambda: EllipticOperator.diagonal(2),
    }
    if args.operator not in ops:
        raise UsageError(f"unknown operator {args.operator!r}")
    op = ops[args.operator]()
    if args.domain_file:
        with open(args.domain_file) as fh:
            dom = load_domain(fh.read())
    elif args.polygon == "lshape":
        dom = PolygonDomain.lshape()
    elif args.polygon == "square":
        dom = PolygonDomain.square()
    else:
        raise UsageError(f"unknown polygon {args.polygon!r}")
    b = dom.boundary(spacing=args.h / 4)
    g = dirichlet_from_expression(args.expr, op.m, b)
    F = None
    if args.rhs is not None:
        c = float(args.rhs)
        F = lambda X: np.full(len(X), c)
    rep = solve_dirichlet(op, dom, g, F=F, h=args.h)
    res = rep.to_dict()
    if args.exact:
        from .spaces import expression_derivatives

        der = expression_derivatives(args.expr, 2)
        res["sup_error"] = exact_error(rep, lambda X: der((0, 0), X))
    scal = {k: v for k, v in res.items() if isinstance(v, (int, float))}
    return res, ["quantity", "value"], sorted(scal.items())


def cmd_neumann(args):
    from .solver import neumann_iteration

    rows = []
    for d in _sweep(args.delta, "delta"):
        r = neumann_iteration(d, args.kind, N=args.N, seed=args.seed)
        rows.append((d, args.kind, int(r.converged), int(r.failed), r.iterations, r.contraction, r.bound, r.solution_error))
    res = {"rows": rows}
    return res, ["delta", "kind", "converged", "failed", "iterations", "contraction", "bound", "solution_error"], rows


def cmd_trace_equiv(args):
    from .solver import poisson_family, trace_equivalence_check

    rep = trace_equivalence_check(poisson_family(), _params(args), h=args.h)
    rows = [(i, r) for i, r in enumerate(rep.ratios)]
    res = {"ratios": rep.ratios, "bracket": rep.bracket, "skipped": rep.skipped}
    return res, ["case", "ratio"], rows


def cmd_mazya(args):
    from .solver import mazya_counterexample

    rows = []
    for e in _sweep(args.eps, "eps"):
        r = mazya_counterexample(args.n, e, trials=args.trials, seed=args.seed)
        rows.append((e, r.theta, r.p_star, r.residual))
    res = {"n": args.n, "rows": rows}
    return res, ["eps", "theta", "p_star", "weak_residual"], rows


# ---------------------------------------------------------------------------
# self tests: the module's closed-form fixtures
# ---------------------------------------------------------------------------


def _check(results, name, ok):
    results.append((name, bool(ok)))


def selftest_bmo():
    from .geometry import GraphDomain, bmo_seminorm

    out = []
    x = np.linspace(0, 1, 200)[:, None]
    _check(out, "constant has zero oscillation", bmo_seminorm(x, np.ones(200), [0.1, 0.3]).seminorm == 0)
    g = GraphDomain.sawtooth(N=8)
    b = g.boundary(nodes_per_facet=4, periodic=True)
    _check(out, "unit normals", np.allclose(np.linalg.norm(b.normals, axis=1), 1))
    _check(out, "normals point down", np.all(b.normals[:, -1] < 0))
    _check(out, "weights sum to surface area", abs(b.weights.sum() - g.surface_area()) < 1e-12)
    _check(out, "lipschitz constant", abs(g.lip_const - 1.0) < 1e-12)
    return out


def selftest_besov():
    from .geometry import GraphDomain
    from .spaces import GridFunction, SpaceParams, WhitneyArray, besov_seminorm, w_norm, weighted_lp_norm, whitney_besov_norm

    out = []
    pr = SpaceParams(2, a=0.0)
    u1 = GridFunction.half_space(lambda X: np.ones(X.shape[:-1]), h=1 / 32)
    u0 = GridFunction.half_space(lambda X: np.zeros(X.shape[:-1]), h=1 / 32)
    _check(out, "zero function", weighted_lp_norm(u0, pr) == 0)
    _check(out, "unit function", abs(weighted_lp_norm(u1, pr) - 1) < 1e-12)
    _check(out, "W norm of 1", abs(w_norm(u1, pr) - 1) < 1e-12)
    b = GraphDomain.flat(N=8).boundary(nodes_per_facet=4)
    _check(out, "constant has zero seminorm", besov_seminorm(np.full(len(b), 3.0), b, SpaceParams(2, s=0.5)) == 0)
    z = WhitneyArray.zeros(2, b)
    _check(out, "zero array", whitney_besov_norm(z, SpaceParams(2, s=0.5, m=2)) == 0)
    return out


def selftest_whitney():
    from .geometry import GraphDomain
    from .spaces import GridFunction, WhitneyArray
    from .whitney import DirichletData, compat_check, dirichlet_to_whitney, extension_values, trace_array, whitney_to_dirichlet

    out = []
    dom = GraphDomain.flat(N=8)
    b = dom.boundary(nodes_per_facet=4)
    one = GridFunction.from_callable(lambda X: np.ones(X.shape[:-1]), dom, 1 / 32, margin=3)
    A = trace_array(one, b, 2)
    _check(out, "trace of 1", np.allclose(A[(0, 0)], 1) and np.allclose(A[(1, 0)], 0) and np.allclose(A[(0, 1)], 0))
    xn = WhitneyArray.from_expression("X2", 2, b)
    g = whitney_to_dirichlet(xn)
    _check(out, "normal derivative of X_n", np.allclose(g[0], 0) and np.allclose(g[1], -1))
    c = dirichlet_to_whitney(DirichletData(2, b, [np.full(len(b), 2.5), np.zeros(len(b))]))
    _check(out, "constant data", np.allclose(c[(0, 0)], 2.5) and np.allclose(c[(1, 0)], 0) and np.allclose(c[(0, 1)], 0))
    m1 = WhitneyArray.from_expression("sin(X1)", 1, b)
    _check(out, "m=1 vacuous compatibility", compat_check(m1, 0.0).passed)
    z = WhitneyArray.zeros(2, b)
    _check(out, "zero array to zero data", all(np.all(gk == 0) for gk in whitney_to_dirichlet(z).components))
    c1 = WhitneyArray.from_expression("3", 1, dom.boundary(nodes_per_facet=4, pad_facets=2))
    X = np.array([[0.3, 0.2], [0.7, 0.05]])
    _check(out, "extension of a constant", np.allclose(extension_values(c1, X, dom), 3.0))
    return out


def selftest_flatten():
    from .flatten import FlatteningMap
    from .geometry import GraphDomain

    out = []
    X = np.array([[0.2, 0.3], [0.7, 1.4], [0.5, 0.01]])
    fm = FlatteningMap(GraphDomain.flat(N=8))
    _check(out, "flat lambda is the identity", np.allclose(fm.lam(X), X, atol=1e-14))
    _check(out, "flat kappa is the identity", np.allclose(fm.kappa(X), X, atol=1e-14))
    _check(out, "flat jacobian", np.allclose(fm.jacobian(X[0])[0], np.eye(2)))
    a = 0.4
    fa = FlatteningMap(GraphDomain.affine(a, N=8))
    Y = X.copy()
    Y[:, 1] += a * Y[:, 0]
    k = fa.kappa(Y)
    _check(out, "affine kappa", np.allclose(k[:, 1], (Y[:, 1] - a * Y[:, 0]) / fa.kappa0, atol=1e-10))
    J = fa.jacobian(X[0])[0]
    _check(out, "affine jacobian row", np.allclose(J[1], [a, fa.kappa0]))
    return out


def selftest_halfspace():
    from .halfspace_ops import HalfSpaceGrid, KernelOperator, LogGrid, apply_commutator_T, apply_czo, estimate_norm, riesz_kernel
    from .spaces import SpaceParams

    out = []
    pr = SpaceParams(2, s=0.5)
    g = HalfSpaceGrid(2, 1, 1, 8, 8)
    f0 = np.zeros(len(g.points))
    for kind in ("K", "R"):
        _check(out, f"{kind} of zero", np.all(KernelOperator(kind, g).apply(f0) == 0))
    _check(out, "K of zero on the half line", np.all(KernelOperator("K", LogGrid(T=10)).apply(np.zeros(LogGrid(T=10).x.size), pr) == 0))
    f = np.exp(-((g.points[:, 0] - 0.5) ** 2 + (g.points[:, 1] - 0.5) ** 2))
    _check(out, "constant symbol kills T", np.allclose(apply_commutator_T(np.full(len(f), 7.0), f, g), 0))
    b0 = g.points[:, 0] ** 2
    t1 = apply_commutator_T(b0, f, g)
    t3 = apply_commutator_T(-3 * b0, f, g)
    _check(out, "T is absolutely homogeneous in b", np.allclose(t3, 3 * t1))
    c = apply_czo(riesz_kernel(0), f, g.points, g.volumes, b=np.full(len(f), 2.0))
    _check(out, "constant symbol kills the czo commutator", np.allclose(c, 0))
    _check(out, "zero operator", estimate_norm(np.zeros((5, 5)), 2, trials=3).value == 0)
    _check(out, "identity", abs(estimate_norm(np.eye(5), 2, trials=3).value - 1) < 1e-12)
    return out


def selftest_lemma1():
    from .halfspace_ops import lemma1_verify

    r = lemma1_verify(1, 1, 0.5, [1], [1], [0])
    return [("anchor lhs 4/3", abs(r.lhs - 4 / 3) < 1e-8), ("anchor ratio", abs(r.ratio - 4 * np.sqrt(2) / 3) < 1e-8)]


def selftest_green():
    from .green import ModelOperator, fundamental_solution, half_space_green, poisson_kernel

    out = []
    L2, L3 = ModelOperator("laplace", 2), ModelOperator("laplace", 3)
    _check(out, "laplace n=3 at |x|=1", abs(fundamental_solution(L3, [1.0, 0, 0]) - 1 / (4 * np.pi)) < 1e-14)
    _check(out, "images n=2", abs(half_space_green(L2, [0, 1.0], [0, 2.0]) - np.log(3) / (2 * np.pi)) < 1e-12)
    _check(out, "poisson n=2", abs(poisson_kernel(L2, 0, [0, 1.0], [0.0]) - 1 / np.pi) < 1e-12)
    B3 = ModelOperator("bilaplace", 3)
    x, y = np.array([0.3, 0.2, 0.5]), np.array([0.1, 0.4, 0.9])
    _check(out, "green symmetry", abs(half_space_green(B3, x, y) - half_space_green(B3, y, x)) < 1e-12)
    _check(out, "zero boundary value", abs(half_space_green(B3, np.array([0.3, 0.2, 0.0]), y)) < 1e-12)
    return out


def selftest_solver():
    from .geometry import PolygonDomain
    from .solver import EllipticOperator, coercivity_estimate, dirichlet_from_expression, solve_dirichlet

    out = []
    dom = PolygonDomain.lshape()
    b = dom.boundary(spacing=1 / 64)
    rep = solve_dirichlet(EllipticOperator.laplacian(), dom, dirichlet_from_expression("0", 1, b), h=1 / 16)
    _check(out, "zero data gives zero", np.abs(rep.solution.values).max() == 0)
    c = coercivity_estimate(EllipticOperator.diagonal(2), dom, trials=3)
    _check(out, "diagonal system coercivity ~ 1", abs(c.estimate - 1) < 0.05)
    return out


def selftest_neumann():
    from .solver import neumann_iteration

    r = neumann_iteration(0.0, N=16)
    return [("no perturbation converges at once", r.converged and r.iterations <= 1)]


def selftest_trace_equiv():
    from .solver import trace_equivalence_check
    from .spaces import SpaceParams

    r = trace_equivalence_check([(lambda X: 0 * X[..., 0], lambda X: 0 * X)], SpaceParams(2, s=0.5), h=1 / 16)
    return [("zero solution skipped", r.skipped == 1)]


def selftest_mazya():
    from .solver import mazya_p_star, mazya_theta

    t = mazya_theta(3, 1.0)
    return [
        ("theta(3,1)", abs(t - 0.8638034) < 1e-6),
        ("p_star above 2", mazya_p_star(3, 1.0) > 2),
        ("p_star tends to 2", mazya_p_star(3, 1e-8) - 2 < 1e-3),
    ]


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_params(p, s=0.5):
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--s", type=float, default=None)
    p.add_argument("--a", type=float, default=None)
    p.set_defaults(default_s=s)


def _add_graph(p):
    p.add_argument("--domain", default="sawtooth", choices=["flat", "sawtooth"])
    p.add_argument("--domain-file", default=None)
    p.add_argument("--slope", type=float, default=1.0)
    p.add_argument("--N", type=int, default=8)


COMMANDS = {}


def _sub(subs, name, fn, selftest, help_):
    p = subs.add_parser(name, help=help_)
    p.add_argument("--selftest", action="store_true", help="run the module's closed-form fixtures")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="cap on worker threads (env LIPSPACE_THREADS)")
    p.add_argument("--out", default=None, help="directory for the CSV and JSON reports")
    p.add_argument("--config", default=None, help="JSON scenario; keys are option names")
    COMMANDS[name] = (fn, selftest, p)
    return p


def build_parser():
    ap = argparse.ArgumentParser(prog="lipspace", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"lipspace {__version__}")
    subs = ap.add_subparsers(dest="command", required=True)

    p = _sub(subs, "bmo", cmd_bmo, selftest_bmo, "BMO seminorm of a built-in fixture")
    p.add_argument("--step", action="store_true", help="Heaviside fixture on the line")
    p.add_argument("--fixture", default="step", choices=["step", "sawtooth-gradient", "log"])
    p.add_argument("--slope", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=4000)
    p.add_argument("--radii", default="0.05 0.1 0.2 0.4")
    p.add_argument("--no-star", action="store_true")

    p = _sub(subs, "besov", cmd_besov, selftest_besov, "boundary Besov norm of an expression")
    _add_graph(p)
    _add_params(p)
    p.add_argument("--expr", default="sin(X1)*exp(X2)")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--nodes-per-facet", type=int, default=8)

    p = _sub(subs, "whitney-roundtrip", cmd_whitney_roundtrip, selftest_whitney, "Whitney array round trips")
    _add_graph(p)
    p.add_argument("--expr", default="sin(X1)*exp(X2)")
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--h", default="0.03125 0.015625")
    p.add_argument("--extension", action="store_true", help="also run trace(extension)")

    p = _sub(subs, "flatten-verify", cmd_flatten_verify, selftest_flatten, "flattening map round trip and BMO ratios")
    p.add_argument("--slope", default="0.5 1 2")
    p.add_argument("--N", type=int, default=16)
    p.add_argument("--points", type=int, default=100)

    p = _sub(subs, "opnorm-sweep", cmd_opnorm_sweep, selftest_halfspace, "norm blow-up sweep on the half line")
    p.add_argument("--operator", default="K", choices=["K", "R", "T_log"])
    p.add_argument("--s-list", default="0.1 0.3 0.5 0.7 0.9")
    p.add_argument("--p-list", default="2")
    p.add_argument("--grid", type=float, nargs=2, default=[100.0, 0.1], metavar=("T", "DU"))
    p.add_argument("--trials", type=int, default=4)

    p = _sub(subs, "lemma1", cmd_lemma1, selftest_lemma1, "parameter-integral lemma")
    p.add_argument("--N", type=int, default=1, choices=[1, 2])
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--a", default="1")
    p.add_argument("--b", default="1")
    p.add_argument("--zeta", default="0")
    p.add_argument("--epsrel", type=float, default=1e-10)

    p = _sub(subs, "green-residual", cmd_green_residual, selftest_green, "mixed derivatives of the Green residual")
    p.add_argument("--op", default="laplace", choices=["laplace", "bilaplace"])
    p.add_argument("--n", type=int, default=2, choices=[2, 3])
    p.add_argument("--grid", type=int, default=10)

    p = _sub(subs, "solve", cmd_solve, selftest_solver, "Dirichlet problem on a polygon")
    p.add_argument("--operator", default="laplacian")
    p.add_argument("--polygon", default="lshape")
    p.add_argument("--domain-file", default=None)
    p.add_argument("--expr", default="X1**3-3*X1*X2**2")
    p.add_argument("--rhs", type=float, default=None)
    p.add_argument("--h", type=float, default=1 / 32)
    p.add_argument("--exact", action="store_true", help="report sup error against --expr")

    p = _sub(subs, "neumann", cmd_neumann, selftest_neumann, "Neumann series for perturbed coefficients")
    p.add_argument("--delta", default="0.01 0.05 0.1")
    p.add_argument("--kind", default="smooth", choices=["smooth", "rough"])
    p.add_argument("--N", type=int, default=32)

    p = _sub(subs, "trace-equiv", cmd_trace_equiv, selftest_trace_equiv, "trace-norm equivalence on the half-plane")
    _add_params(p)
    p.add_argument("--h", type=float, default=1 / 64)

    p = _sub(subs, "mazya", cmd_mazya, selftest_mazya, "Maz'ya counterexample")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--eps", default="1 0.1 0.01")
    p.add_argument("--trials", type=int, default=10)
    return ap


def _apply_config(args, parser):
    with open(args.config) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    known = {a.dest for a in parser._actions}
    for k, v in cfg.items():
        dest = k.replace("-", "_")
        if dest not in known or dest in ("config", "help"):
            raise UsageError(f"unknown config key {k!r}")
        if isinstance(v, list):
            if not v:
                raise UsageError(f"sweep list {k} is empty")
            if dest != "grid":
                v = " ".join(str(x) for x in v)
        setattr(args, dest, v)


def _set_threads(n):
    n = n or os.environ.get("LIPSPACE_THREADS")
    if n is None:
        return None
    n = int(n)
    if n < 1:
        raise UsageError("--threads must be >= 1")
    for v in _THREAD_VARS:
        os.environ[v] = str(n)
    return n


def _envelope(args, result, seconds):
    import scipy

    inputs = {k: v for k, v in vars(args).items() if k not in ("out",)}
    return {
        "command": args.command,
        "inputs": _jsonable(inputs),
        "result": _jsonable(result),
        "seed": args.seed,
        "versions": {"lipspace": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()},
        "wall_time": seconds,
    }


def run(args):
    """Dispatch parsed arguments; return ``(exit_code, payload)``."""
    fn, selftest, parser = COMMANDS[args.command]
    if args.config:
        _apply_config(args, parser)
    if hasattr(args, "default_s") and args.s is None and args.a is None:
        args.s = args.default_s
    _set_threads(args.threads)
    if args.selftest:
        try:
            checks = selftest()
        except LipspaceError as e:
            checks = [(f"selftest raised {e.to_dict()}", False)]
        for name, ok in checks:
            print(f"{'PASS' if ok else 'FAIL'} {name}")
        return (0 if all(ok for _, ok in checks) else 1), None
    t0 = time.perf_counter()
    result, header, rows = fn(args)
    seconds = time.perf_counter() - t0
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, f"{args.command}.csv"), "w", newline="") as fh:
            fh.write(_csv(header, rows))
        with open(os.path.join(args.out, f"{args.command}.json"), "w") as fh:
            json.dump(_envelope(args, result, seconds), fh, indent=2, sort_keys=True)
    print(json.dumps(_jsonable(result), sort_keys=True))
    return 0, result


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        code, _ = run(args)
        return code
    except UsageError as e:
        print(f"lipspace: usage error: {e}", file=sys.stderr)
        return 2
    except LipspaceError as e:
        print(json.dumps(_jsonable(e.to_dict())), file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as e:
        print(f"lipspace: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
