"""Dirichlet problems for divergence-form operators of order 2m in the plane.

The form ``A(U, V) = sum_{|alpha|=|beta|=m} int A_ab D^beta U D^alpha V`` is
discretized as ``D^T A D`` on a node grid aligned with the polygon edges.
Each pair ``(alpha, beta)`` is sampled where its difference quotients are
compact: for m = 1 pure second derivatives live on edges and mixed pairs on
cells; for m = 2 the pure pairs live on nodes (giving the 13-point
bilaplacian for ``Delta^2``) and pairs involving ``D_12`` on cells.

Also here: sampled coercivity, the frozen-coefficient Neumann iteration, the
trace-norm equivalence test and the Maz'ya counterexample.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import multiindex as mi
from .errors import ParameterError, PreconditionError, SolveError
from .geometry import PolygonDomain, segment_boundary
from .spaces import GridFunction, SpaceParams, WhitneyArray, besov_norm, w_norm, whitney_besov_norm
from .whitney import (
    DirichletData,
    compat_check,
    dirichlet_to_whitney,
    extension_values,
    normal_derivatives,
)

# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


def _const(c):
    return lambda X: np.full(np.asarray(X).shape[:-1], float(c))


@dataclass
class EllipticOperator:
    """Top-order coefficients ``A_ab(X)`` (scalar, l = 1) of a form of order m.

    ``coeffs`` maps ``(alpha, beta)`` to a callable of points ``(..., n)`` or
    to a number.  Missing pairs are zero.  ``lower`` holds optional
    lower-order pairs (only evaluated by the coercivity sampler).
    """

    m: int
    n: int = 2
    coeffs: dict = field(default_factory=dict)
    lower: dict = field(default_factory=dict)

    def __post_init__(self):
        for (a, b), c in list(self.coeffs.items()):
            if sum(a) != self.m or sum(b) != self.m or len(a) != self.n or len(b) != self.n:
                raise ParameterError(f"coefficient index ({a}, {b}) is not of order {self.m} in {self.n} variables")
            if not callable(c):
                self.coeffs[(a, b)] = _const(c)

    def coefficient(self, alpha, beta, X):
        c = self.coeffs.get((tuple(alpha), tuple(beta)))
        if c is None:
            return np.zeros(np.asarray(X).shape[:-1])
        return np.asarray(c(X), dtype=float) * np.ones(np.asarray(X).shape[:-1])

    def sup_norm(self, X):
        """``max_X |A(X)|`` (Frobenius over index pairs) on sample points."""
        tot = 0.0
        for key in self.coeffs:
            tot = tot + self.coefficient(*key, X) ** 2
        return float(np.max(np.sqrt(tot)))

    @classmethod
    def laplacian(cls, n=2, a=None):
        """``-div(a grad)``; ``a`` a callable or number (default 1)."""
        a = 1.0 if a is None else a
        return cls(1, n, {(mi.unit(n, i), mi.unit(n, i)): a for i in range(n)})

    @classmethod
    def bilaplacian(cls, n=2):
        """``Delta^2`` through the form ``int Delta U Delta V``."""
        pure = [tuple(2 * e for e in mi.unit(n, i)) for i in range(n)]
        return cls(2, n, {(a, b): 1.0 for a in pure for b in pure})

    @classmethod
    def diagonal(cls, m, n=2):
        """``A_ab = delta_ab`` for ``|alpha| = |beta| = m``."""
        return cls(m, n, {(a, a): 1.0 for a in mi.of_order(n, m)})

    @classmethod
    def mazya(cls, n=3, eps=1.0, center=None):
        """Fourth-order form with coefficients ``a, b, c`` and the radial field ``x/|x|``.

        ``A(U,V) = int a DU DV + b (x^T H_U x) DV + b DU (x^T H_V x) + c (x^T H_U x)(x^T H_V x)``
        with ``D`` the Laplacian, ``H`` the Hessian, ``x`` the unit radial
        vector about ``center``; ``a = (n-2)^2 + eps``, ``b = n(n-2)``, ``c = n^2``.
        """
        if eps <= 0:
            raise ParameterError("eps must be positive")
        a, b, c = (n - 2) ** 2 + eps, n * (n - 2), n**2
        center = np.zeros(n) if center is None else np.asarray(center, dtype=float)
        idx = mi.of_order(n, 2)

        def lap_w(g):
            return 1.0 if max(g) == 2 else 0.0

        def rad_w(g, X):
            d = np.asarray(X, dtype=float) - center
            r = np.linalg.norm(d, axis=-1)
            r = np.where(r > 0, r, 1.0)
            xh = d / r[..., None]
            return (2.0 / mi.fact(g)) * mi.power(xh, g)

        coeffs = {}
        for al in idx:
            for be in idx:
                coeffs[(al, be)] = (
                    lambda X, al=al, be=be: a * lap_w(al) * lap_w(be)
                    + b * lap_w(al) * rad_w(be, X)
                    + b * rad_w(al, X) * lap_w(be)
                    + c * rad_w(al, X) * rad_w(be, X)
                )
        op = cls(2, n, coeffs)
        op.mazya_abc = (a, b, c)
        return op


# ---------------------------------------------------------------------------
# coercivity
# ---------------------------------------------------------------------------


@dataclass
class CoercivityReport:
    estimate: float
    ratios: list
    verified: bool

    def to_dict(self):
        return {"kappa_estimate": self.estimate, "ratios": list(self.ratios), "verified": self.verified}


def _trial_field(rng, lo, hi, n_modes=4):
    """Random smooth field compactly supported in the box ``[lo, hi]``."""
    c = lo + (hi - lo) * rng.uniform(0.3, 0.7, lo.size)
    R = 0.3 * float(np.min(hi - lo)) * rng.uniform(0.6, 1.0)
    ks = rng.normal(scale=2 * np.pi / R, size=(n_modes, lo.size))
    ph = rng.uniform(0, 2 * np.pi, n_modes)
    amp = rng.normal(size=n_modes)

    def f(X):
        t = np.sum((X - c) ** 2, axis=-1) / R**2
        with np.errstate(divide="ignore", over="ignore"):
            bump = np.where(t < 1, np.exp(-1.0 / np.maximum(1 - t, 1e-300)), 0.0)
        wave = sum(a * np.cos(X @ k + p) for a, k, p in zip(amp, ks, ph))
        return bump * (1.0 + 0.5 * wave)

    return f


def form_value(op, U, V=None):
    """Midpoint quadrature of ``A(U, V)`` from central differences of grid functions."""
    V = U if V is None else V
    X = U.coords()
    idx = mi.of_order(U.dim, op.m)
    dU = {b: U.derivative(b)[0] for b in idx}
    dV = {a: V.derivative(a)[0] for a in idx}
    tot = 0.0
    for (a, b) in op.coeffs:
        A = op.coefficient(a, b, X)
        tot += float(np.sum(np.where(U.mask, A * dU[b] * dV[a], 0.0))) * U.cell_volume
    return tot


def coercivity_estimate(op, domain, trials=20, h=None, seed=0):
    """Sampled lower estimate of ``kappa`` in ``Re A(V,V) >= kappa sum_{|g|=m} ||D^g V||^2``.

    Trial fields are smooth bumps supported inside the domain's box.  A
    non-positive estimate is reported as ``verified=False``.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    from .spaces import box_for

    h = h or (1 / 48 if op.n == 2 else 1 / 24)
    lo, hh, counts = box_for(domain, h)
    hi = lo + hh * counts
    ratios = []
    for _ in range(trials):
        f = _trial_field(rng, lo, hi)
        if isinstance(domain, PolygonDomain):
            g = lambda X, f=f: np.where(domain.contains(X.reshape(-1, 2)).reshape(X.shape[:-1]), f(X), 0.0)
        else:
            g = f
        U = GridFunction.from_callable(g, domain, h, margin=op.m)
        den = 0.0
        for gam in mi.of_order(op.n, op.m):
            d = U.derivative(gam)[0]
            den += float(np.sum(np.where(U.mask, d * d, 0.0))) * U.cell_volume
        if den == 0:
            continue
        ratios.append(form_value(op, U) / den)
    est = float(min(ratios))
    return CoercivityReport(est, ratios, est > 0)


# ---------------------------------------------------------------------------
# node-grid assembly
# ---------------------------------------------------------------------------

# difference stencils on node offsets, scaled by h^-m; location kinds:
# node, xedge (between (i,j) and (i+1,j)), yedge, cell (centre of (i..i+1, j..j+1))
_LOC_SHIFT = {"node": (0.0, 0.0), "xedge": (0.5, 0.0), "yedge": (0.0, 0.5), "cell": (0.5, 0.5)}

_CORNERS = [(0, 0), (1, 0), (0, 1), (1, 1)]


def _stencil(alpha, loc):
    a = tuple(alpha)
    if sum(a) == 1:
        if loc == "xedge" and a == (1, 0):
            return {(1, 0): 1.0, (0, 0): -1.0}
        if loc == "yedge" and a == (0, 1):
            return {(0, 1): 1.0, (0, 0): -1.0}
        if loc == "cell":
            if a == (1, 0):
                return {(1, 0): 0.5, (1, 1): 0.5, (0, 0): -0.5, (0, 1): -0.5}
            return {(0, 1): 0.5, (1, 1): 0.5, (0, 0): -0.5, (1, 0): -0.5}
    if sum(a) == 2:
        pure = {(2, 0): [(-1, 0), (0, 0), (1, 0)], (0, 2): [(0, -1), (0, 0), (0, 1)]}
        if a in pure and loc == "node":
            return dict(zip(pure[a], [1.0, -2.0, 1.0]))
        if a == (1, 1) and loc == "cell":
            return {(1, 1): 1.0, (1, 0): -1.0, (0, 1): -1.0, (0, 0): 1.0}
        if a in pure and loc == "cell":
            out = {}
            for c in _CORNERS:
                for off, w in zip(pure[a], [1.0, -2.0, 1.0]):
                    k = (off[0] + c[0], off[1] + c[1])
                    out[k] = out.get(k, 0.0) + 0.25 * w
            return out
    raise ParameterError(f"no stencil for {alpha} at {loc}")


def _location(alpha, beta, m):
    if m == 1:
        if alpha == beta:
            return "xedge" if alpha == (1, 0) else "yedge"
        return "cell"
    if (1, 1) in (alpha, beta):
        return "cell"
    return "node"


@dataclass
class NodeGrid:
    """Nodes ``lo + h k`` of a box covering the domain with ``margin`` extra layers."""

    lo: np.ndarray
    h: float
    shape: tuple
    margin: int

    @classmethod
    def for_domain(cls, domain, h, margin):
        lo, hi = domain.bbox
        counts = np.round((hi - lo) / h).astype(int)
        if not np.allclose(lo + counts * h, hi, atol=1e-9 * h):
            raise ParameterError("grid spacing must divide the polygon's bounding box")
        return cls(np.asarray(lo, dtype=float) - margin * h, float(h), tuple(int(c) + 1 + 2 * margin for c in counts), margin)

    @property
    def size(self):
        return int(np.prod(self.shape))

    def coords(self, loc="node"):
        s = _LOC_SHIFT[loc]
        ax = [self.lo[k] + self.h * (np.arange(self.shape[k]) + s[k]) for k in range(2)]
        return np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1)

    def diff_matrix(self, alpha, loc):
        """Sparse map from node values to ``D^alpha`` at locations of kind ``loc``."""
        st = _stencil(alpha, loc)
        Nx, Ny = self.shape
        I, J = np.meshgrid(np.arange(Nx), np.arange(Ny), indexing="ij")
        ok = np.ones(self.shape, dtype=bool)
        for (di, dj) in st:
            ok &= (I + di >= 0) & (I + di < Nx) & (J + dj >= 0) & (J + dj < Ny)
        rows_all = (I * Ny + J)[ok]
        rows, cols, vals = [], [], []
        for (di, dj), w in st.items():
            rows.append(rows_all)
            cols.append(((I + di) * Ny + (J + dj))[ok])
            vals.append(np.full(rows_all.size, w / self.h ** sum(alpha)))
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.size, self.size)
        ), ok.ravel()


def _closure_mask(domain, P, h):
    P = P.reshape(-1, 2)
    on = domain.distance(P) <= 1e-9 * h
    return np.where(on, 0.5, 1.0) * (domain.contains(P) | on)


def assemble_form(op, grid, domain=None):
    """Sparse matrix of the discrete form ``sum_loc h^2 D_a^T A_ab D_b``.

    With a ``domain`` only locations in its closure contribute.
    """
    if op.n != 2:
        raise ParameterError("the grid solver is implemented for n = 2")
    if op.m not in (1, 2):
        raise ParameterError("the grid solver handles m in {1, 2}")
    K = sp.csr_matrix((grid.size, grid.size))
    cache = {}
    masks = {}
    for (a, b) in op.coeffs:
        loc = _location(a, b, op.m)
        for g in (a, b):
            if (g, loc) not in cache:
                cache[(g, loc)] = grid.diff_matrix(g, loc)
        Da, oka = cache[(a, loc)]
        Db, okb = cache[(b, loc)]
        P = grid.coords(loc)
        A = op.coefficient(a, b, P).ravel() * (oka & okb)
        if domain is not None:
            if loc not in masks:
                masks[loc] = _closure_mask(domain, P, grid.h)
            A = A * masks[loc]
        K = K + Da.T @ sp.diags(A * grid.h**2) @ Db
    return K.tocsr()


def gram_matrix(m, grid, domain=None):
    """Discrete ``H^m`` Gram matrix: top-order form plus ``h^2`` mass."""
    return assemble_form(EllipticOperator.diagonal(m), grid, domain) + sp.identity(grid.size) * grid.h**2


# ---------------------------------------------------------------------------
# lift from Dirichlet data
# ---------------------------------------------------------------------------


def _project_to_edges(domain, X):
    """Nearest edge index and arc parameter of the projection of each point."""
    v = domain.vertices
    w = np.roll(v, -1, axis=0)
    seg = w - v
    L2 = np.sum(seg**2, axis=1)
    t = np.clip(np.einsum("pkd,kd->pk", X[:, None, :] - v[None], seg) / L2, 0.0, 1.0)
    proj = v[None] + t[..., None] * seg[None]
    d = np.linalg.norm(X[:, None, :] - proj, axis=2)
    k = np.argmin(d, axis=1)
    return k, t[np.arange(len(X)), k], proj[np.arange(len(X)), k]


def jet_at(arr, domain, X):
    """Whitney components at the boundary projections of ``X``.

    Components are interpolated linearly along the edge between quadrature
    nodes (extrapolated from the two end nodes).  Returns ``(proj, comps)``.
    """
    b = arr.boundary
    k, t, proj = _project_to_edges(domain, X)
    v = domain.vertices
    seg = np.roll(v, -1, axis=0) - v
    out = {a: np.zeros(len(X)) for a in arr.indices()}
    for e in np.unique(k):
        sel = np.flatnonzero(k == e)
        idx = np.flatnonzero(b.facet == e)
        s_nodes = (b.nodes[idx] - v[e]) @ seg[e] / (seg[e] @ seg[e])
        order = np.argsort(s_nodes)
        idx, s_nodes = idx[order], s_nodes[order]
        for a in arr.indices():
            f = arr[a][idx]
            if idx.size == 1:
                out[a][sel] = f[0]
                continue
            val = np.interp(t[sel], s_nodes, f)
            lo = t[sel] < s_nodes[0]
            hi = t[sel] > s_nodes[-1]
            s0 = (f[1] - f[0]) / (s_nodes[1] - s_nodes[0])
            s1 = (f[-1] - f[-2]) / (s_nodes[-1] - s_nodes[-2])
            val[lo] = f[0] + s0 * (t[sel][lo] - s_nodes[0])
            val[hi] = f[-1] + s1 * (t[sel][hi] - s_nodes[-1])
            out[a][sel] = val
    return proj, out


def taylor_lift(arr, domain, X):
    """``sum_{|b|<=m-1} f_b(Y) (X - Y)^b / b!`` with ``Y`` the nearest boundary point."""
    proj, comps = jet_at(arr, domain, X)
    d = X - proj
    return sum(comps[b] * mi.power(d, b) / mi.fact(b) for b in arr.indices())


# ---------------------------------------------------------------------------
# Dirichlet solve
# ---------------------------------------------------------------------------


@dataclass
class SolveReport:
    """Outcome of :func:`solve_dirichlet` (fields as named)."""

    solution: GridFunction
    residual: float
    relative_residual: float
    energy: float
    pairing: float
    trace_error: float
    norms: dict
    iterations: int = 1
    info: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "residual_dual": self.residual,
            "relative_residual": self.relative_residual,
            "energy": self.energy,
            "rhs_pairing": self.pairing,
            "trace_error": self.trace_error,
            "norms": dict(self.norms),
            "iterations": self.iterations,
            "info": dict(self.info),
        }


def _as_array(g):
    if isinstance(g, WhitneyArray):
        return g
    if isinstance(g, DirichletData):
        return dirichlet_to_whitney(g)
    raise ParameterError("boundary data must be DirichletData or WhitneyArray")


def _dual_norm(G, r):
    if not np.any(r):
        return 0.0
    return float(np.sqrt(max(r @ spla.spsolve(G, r), 0.0)))


def _reduction(m, arr, domain, grid, X, inner, closed, lift):
    """Map from interior unknowns to the correction ``W`` on all nodes.

    ``W`` vanishes on and outside the boundary.  For m = 2 a ghost node ``G``
    whose mirror ``M`` across the nearest edge is a grid node of the closed
    domain is tied to it by ``W_G = W_M`` while the lift there becomes
    ``lift_M + 2 d d_nu U(Y)``: the discrete clamped condition
    ``U_G - U_M = 2 d g_1`` of the even reflection.  ``lift`` is updated in
    place.
    """
    I = np.flatnonzero(inner)
    col = np.full(grid.size, -1)
    col[I] = np.arange(I.size)
    rows, cols = list(I), list(range(I.size))
    if m == 2:
        ghost = np.flatnonzero(~closed)
        proj, comps = jet_at(arr, domain, X[ghost])
        d = np.linalg.norm(X[ghost] - proj, axis=1)
        nu = (X[ghost] - proj) / np.maximum(d, 1e-300)[:, None]
        g1 = comps[(1, 0)] * nu[:, 0] + comps[(0, 1)] * nu[:, 1]
        M = 2 * proj - X[ghost]
        kk = np.rint((M - grid.lo) / grid.h).astype(int)
        on_grid = np.all(np.abs(M - (grid.lo + kk * grid.h)) < 1e-9 * grid.h, axis=1)
        on_grid &= np.all((kk >= 0) & (kk < np.array(grid.shape)), axis=1)
        for t in np.flatnonzero(on_grid):
            j = kk[t, 0] * grid.shape[1] + kk[t, 1]
            if not closed[j]:
                continue
            gi = ghost[t]
            lift[gi] = lift[j] + 2 * d[t] * g1[t]
            if col[j] >= 0:
                rows.append(gi)
                cols.append(col[j])
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(grid.size, I.size))


def solve_dirichlet(op, domain, g, F=None, params=None, h=1 / 32, compat_tol=None, trace=True):
    """Solve ``A(U, V) = <F, V>`` for ``U`` with Dirichlet data ``g``.

    ``U = Ext(g) + W``: the lift is the co-boundary extension inside the
    domain and the Taylor field of the nearest boundary jet at grid nodes on
    or outside the boundary; ``W`` vanishes there and solves the reduced
    system.  ``F`` is a density (callable) paired by nodal quadrature.
    ``params`` (default ``p = 2, a = 0``) selects the reported W-norm.

    Raises :class:`PreconditionError` for incompatible or non-finite data
    and :class:`SolveError` for a singular reduced system.
    """
    if not isinstance(domain, PolygonDomain):
        raise ParameterError("solve_dirichlet works on polygon domains")
    params = params or SpaceParams(2.0, a=0.0, m=op.m)
    arr = _as_array(g)
    if arr.m != op.m:
        raise ParameterError(f"data of order {arr.m} for an operator of order {op.m}")
    for a in arr.indices():
        if not np.all(np.isfinite(arr[a])):
            raise PreconditionError("boundary data contain non-finite values")
    if op.m > 1:
        tol = compat_tol if compat_tol is not None else 50 * np.max(arr.boundary.weights)
        rep = compat_check(arr, tol)
        if not rep.passed:
            raise PreconditionError(f"boundary array fails the compatibility test (residual {rep.max_residual:.3e})")
    grid = NodeGrid.for_domain(domain, h, margin=op.m)
    X = grid.coords().reshape(-1, 2)
    dist = domain.distance(X)
    inner = domain.contains(X) & (dist > 1e-9 * h)
    closed = inner | (dist <= 1e-9 * h)
    lift = np.zeros(grid.size)
    lift[~inner] = taylor_lift(arr, domain, X[~inner])
    lift[inner] = extension_values(arr, X[inner], domain)
    I = np.flatnonzero(inner)
    P = _reduction(op.m, arr, domain, grid, X, inner, closed, lift)
    K = assemble_form(op, grid, domain)
    Fv = np.zeros(grid.size)
    if F is not None:
        Fv[inner] = np.asarray(F(X[inner]), dtype=float) * h**2
    KII = (P.T @ K @ P).tocsc()
    rhs = P.T @ (Fv - K @ lift)
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            W = spla.spsolve(KII, rhs)
        except (spla.MatrixRankWarning, RuntimeError) as exc:
            raise SolveError(f"reduced system is singular: {exc}") from exc
    if not np.all(np.isfinite(W)):
        raise SolveError("reduced system is singular")
    Wfull = P @ W
    U = lift + Wfull
    G = (P.T @ gram_matrix(op.m, grid, domain) @ P).tocsc()
    r = P.T @ (K @ U - Fv)
    res = _dual_norm(G, r)
    scale = _dual_norm(G, P.T @ Fv) + _dual_norm(G, P.T @ (K @ lift))
    energy = float(Wfull @ (K @ Wfull))
    pairing = float(Fv @ U)
    gf = _node_gridfunction(grid, U, inner.reshape(grid.shape), closed.reshape(grid.shape), domain, X)
    terr = float("nan")
    if trace:
        got = normal_derivatives(gf, arr.boundary, op.m)
        want = g if isinstance(g, DirichletData) else None
        if want is not None:
            terr = got.max_abs_diff(want)
    norms = {"W": w_norm(gf, params.with_m(op.m)), "data_whitney_besov": whitney_besov_norm(arr, params)}
    norms["F_dual"] = _dual_norm(G, P.T @ Fv)
    return SolveReport(
        gf,
        res,
        res / scale if scale > 0 else 0.0,
        energy,
        pairing,
        terr,
        norms,
        info={"h": h, "unknowns": int(I.size), "nnz": int(K.nnz)},
    )


def _node_gridfunction(grid, U, inner, closed, domain, X):
    """Wrap node values as a grid function; ``full_mask`` is the closed domain."""
    m = grid.margin
    core = (slice(m, -m),) * 2
    mask = inner[core]
    rho = np.zeros(mask.shape)
    pts = X.reshape(grid.shape + (2,))[core]
    rho[mask] = domain.distance(pts[mask])
    return GridFunction(
        values=U.reshape(grid.shape)[None],
        origin=grid.lo + m * grid.h,
        h=np.array([grid.h, grid.h]),
        margin=m,
        mask=mask,
        rho=rho,
        meta={"domain": "PolygonDomain", "layout": "node"},
        full_mask=closed,
    )


def exact_error(report, exact):
    """``max |U - exact|`` over grid nodes in the closed domain."""
    U = report.solution
    X = U.coords()
    vals = U.interior_values()[0]
    return float(np.max(np.abs(vals - exact(X))[U.mask]))


def dirichlet_from_expression(expr, m, boundary):
    """``g_k = (nu . grad)^k U`` of a closed-form expression at boundary nodes."""
    from .spaces import expression_derivatives

    deriv = expression_derivatives(expr, 2)
    nu = boundary.normals
    X = boundary.nodes
    comps = []
    for k in range(m):
        acc = 0.0
        for a in mi.of_order(2, k):
            c = math.factorial(k) / mi.fact(a)
            acc = acc + c * mi.power(nu, a) * deriv(a, X)
        comps.append(np.asarray(acc, dtype=float) * np.ones(len(X)))
    return DirichletData(m, boundary, comps)


@dataclass
class APrioriReport:
    constants: list
    low: float
    high: float

    @property
    def bracket(self):
        return self.high / self.low if self.low > 0 else float("inf")

    def to_dict(self):
        return {"constants": list(self.constants), "low": self.low, "high": self.high, "bracket": self.bracket}


A_PRIORI_CASES = [
    ("X1", None),
    ("X1**2 - X2**2", None),
    ("X1**3 - 3*X1*X2**2", None),
    ("exp(X1)*cos(X2)", None),
    ("sin(2*X1)*exp(2*X2)", None),
    ("0", lambda X: np.ones(X.shape[0])),
    ("0", lambda X: np.sin(np.pi * X[:, 0]) * X[:, 1]),
    ("X1*X2", lambda X: X[:, 0]),
    ("1 + X2", lambda X: np.cos(3 * X[:, 1])),
    ("exp(-X1**2)", lambda X: 4 * X[:, 0] * X[:, 1]),
]


def a_priori_family(op, domain, h=1 / 32, params=None, cases=None, spacing=None):
    """``||U||_W / (||g||_{Whitney-Besov} + ||F||_dual)`` over a family of cases."""
    cases = cases or A_PRIORI_CASES
    b = domain.boundary(spacing=spacing or h / 4)
    consts = []
    for expr, F in cases:
        g = dirichlet_from_expression(expr, op.m, b)
        rep = solve_dirichlet(op, domain, g, F=F, params=params, h=h, trace=False)
        den = rep.norms["data_whitney_besov"] + rep.norms["F_dual"]
        consts.append(rep.norms["W"] / den)
    return APrioriReport(consts, min(consts), max(consts))


# ---------------------------------------------------------------------------
# Neumann iteration on a truncated half-plane
# ---------------------------------------------------------------------------


@dataclass
class NeumannReport:
    """Iteration ``v <- Qf - S v`` on the gradient; ``failed`` flags divergence."""

    delta: float
    converged: bool
    failed: bool
    iterations: int
    contraction: float
    residuals: list
    solution_error: float
    bound: float

    def to_dict(self):
        return {
            "delta": self.delta,
            "converged": self.converged,
            "contraction_failure": self.failed,
            "iterations": self.iterations,
            "contraction_factor": self.contraction,
            "residuals": list(self.residuals),
            "solution_error": self.solution_error,
            "contraction_bound": self.bound,
        }


def _perturbation(kind, delta, Xe, seed):
    if kind == "smooth":
        return delta * np.sin(2 * np.pi * Xe[..., 0]) * np.cos(2 * np.pi * Xe[..., 1])
    if kind == "rough":
        rng = np.random.default_rng(seed)
        return delta * rng.choice([-1.0, 1.0], size=Xe.shape[:-1])
    raise ParameterError(f"unknown perturbation kind {kind!r}")


def neumann_iteration(delta, kind="smooth", N=32, max_iter=200, tol=1e-10, seed=0, f=None):
    """Solve ``-div(A grad u) = f`` on ``(0,1) x (0,1)`` (periodic in ``x_1``, ``u = 0`` at ``x_2 = 0, 1``).

    ``A = 1 + b`` with ``|b| <= delta``.  Freezing ``A_0 = min A`` gives

        D u = D L_0^{-1} f - D L_0^{-1} D^T (A - A_0) D u,

    i.e. ``v = Qf - S v`` for ``v = D u``; ``u`` is recovered as
    ``L_0^{-1}(f - D^T (A - A_0) v)``.  The contraction factor is bounded by
    ``max (A - A_0) / A_0 <= 2 delta / (1 - delta)``.  Divergence (residual
    growth over 5 consecutive iterations) is reported, not raised.
    """
    if not 0 <= delta < 1:
        raise ParameterError("delta must lie in [0, 1)")
    h = 1.0 / N
    M = N - 1  # interior rows in x_2
    x1 = np.arange(N) * h
    x2 = (np.arange(M) + 1) * h
    # gradient on x-edges (periodic) and y-edges (including the two walls)
    idx = np.arange(N * M).reshape(N, M)
    rows, cols, vals = [], [], []
    r = 0
    for i in range(N):
        for j in range(M):
            rows += [r, r]
            cols += [idx[(i + 1) % N, j], idx[i, j]]
            vals += [1 / h, -1 / h]
            r += 1
    nx = r
    for i in range(N):
        for j in range(M + 1):
            if j < M:
                rows.append(r), cols.append(idx[i, j]), vals.append(1 / h)
            if j > 0:
                rows.append(r), cols.append(idx[i, j - 1]), vals.append(-1 / h)
            r += 1
    D = sp.csr_matrix((vals, (rows, cols)), shape=(r, N * M))
    Xe = np.concatenate(
        [
            np.stack(np.meshgrid(x1 + h / 2, x2, indexing="ij"), -1).reshape(-1, 2),
            np.stack(np.meshgrid(x1, np.arange(M + 1) * h + h / 2, indexing="ij"), -1).reshape(-1, 2),
        ]
    )
    b = _perturbation(kind, delta, Xe, seed)
    A = 1.0 + b
    A0 = float(A.min())
    dA = A - A0
    W = h**2
    L0 = (D.T @ D * (A0 * W)).tocsc()
    L = (D.T @ sp.diags(A * W) @ D).tocsc()
    X = np.stack(np.meshgrid(x1, x2, indexing="ij"), -1).reshape(-1, 2)
    fv = (f(X) if f is not None else np.sin(np.pi * X[:, 1]) * (1 + np.cos(2 * np.pi * X[:, 0]))) * W
    solve0 = spla.factorized(L0)
    Qf = D @ solve0(fv)
    S = lambda v: D @ solve0(D.T @ (dA * W * v))
    norm = lambda v: float(np.sqrt(np.sum(A0 * W * v * v)))
    v = Qf.copy()  # first iterate from v = 0
    residuals = []
    converged = failed = False
    growth = 0
    it = 0
    for it in range(1, max_iter + 1):
        nxt = Qf - S(v)
        res = norm(nxt - v) / max(norm(v), 1e-300)
        residuals.append(res)
        if res <= tol:
            converged = True
            break
        v = nxt
        if len(residuals) > 1 and residuals[-1] > residuals[-2]:
            growth += 1
            if growth >= 5:
                failed = True
                break
        else:
            growth = 0
    tail = [r2 / r1 for r1, r2 in zip(residuals[:-1], residuals[1:]) if r1 > 0]
    rate = float(np.exp(np.mean(np.log(tail[-5:])))) if tail else 0.0
    u = solve0(fv - D.T @ (dA * W * v))
    u_direct = spla.spsolve(L, fv)
    err = float(np.max(np.abs(u - u_direct)) / max(np.max(np.abs(u_direct)), 1e-300))
    return NeumannReport(delta, converged, failed, it, rate, residuals, err, float(dA.max() / A0))


def neumann_sweep(deltas=(0.01, 0.05, 0.1), kind="smooth", **kw):
    return [neumann_iteration(d, kind, **kw) for d in deltas]


# ---------------------------------------------------------------------------
# trace-norm equivalence
# ---------------------------------------------------------------------------


def _pole_solution(c, w, odd=False):
    """Harmonic ``U = Re(c / (z - w))`` (or the imaginary part) with ``Im w < 0``."""

    def U(X):
        z = X[..., 0] + 1j * X[..., 1]
        F = c / (z - w)
        return F.imag if odd else F.real

    def grad(X):
        z = X[..., 0] + 1j * X[..., 1]
        dF = -c / (z - w) ** 2
        # d/dx Re F = Re F', d/dy Re F = -Im F'; for Im F: Im F', Re F'
        if odd:
            return np.stack([dF.imag, dF.real], axis=-1)
        return np.stack([dF.real, -dF.imag], axis=-1)

    return U, grad


def poisson_family():
    """Five exact harmonic functions of the upper half-plane.

    ``Re(i b / (z - c + i b)) = (y + b) / ((x - c)^2 + (y + b)^2)`` is the
    Poisson extension of ``b / ((x - c)^2 + b^2)`` (times ``1/b``); the
    conjugate variants give odd data.
    """
    out = []
    for c, b, odd in [(0.0, 0.5, False), (0.3, 0.25, False), (-0.4, 1.0, False), (0.0, 0.5, True), (0.5, 0.3, True)]:
        out.append(_pole_solution(1j * b if not odd else b, c - 1j * b, odd))
    return out


@dataclass
class TraceEquivalenceReport:
    ratios: list
    skipped: int

    @property
    def bracket(self):
        return max(self.ratios) / min(self.ratios)

    def to_dict(self):
        return {"ratios": list(self.ratios), "skipped": self.skipped, "bracket": self.bracket}


def trace_equivalence_check(solutions, params, L=2.0, H=1.0, h=1 / 64, boundary_nodes=None):
    """Ratio ``||Tr U||_{B^s_p} / (sum_{|a|<=1} int x_2^{p(1-s)-1} |D^a U|^p)^{1/p}`` per solution.

    ``solutions`` are pairs ``(U, grad U)`` of callables on the truncated
    half-plane ``[-L, L] x (0, H]``; zero right-hand sides are skipped.
    """
    p, s = params.p, params.s
    nb = boundary_nodes or int(round(2 * L / h))
    bd = segment_boundary((-L, 0.0), (L, 0.0), nb)
    nx, ny = int(round(2 * L / h)), int(round(H / h))
    x = -L + (np.arange(nx) + 0.5) * h
    y = (np.arange(ny) + 0.5) * h
    X = np.stack(np.meshgrid(x, y, indexing="ij"), -1)
    wgt = X[..., 1] ** (p * (1 - s) - 1) * h * h
    ratios = []
    skipped = 0
    for U, grad in solutions:
        u = U(X)
        gu = grad(X)
        rhs = float(np.sum((np.abs(u) ** p + np.linalg.norm(gu, axis=-1) ** p) * wgt)) ** (1 / p)
        if rhs == 0:
            skipped += 1
            continue
        lhs = besov_norm(U(bd.nodes), bd, params, periodic=False)
        ratios.append(lhs / rhs)
    return TraceEquivalenceReport(ratios, skipped)


# ---------------------------------------------------------------------------
# Maz'ya counterexample
# ---------------------------------------------------------------------------


def mazya_theta(n, eps):
    """``2 - n/2 + (n/2) sqrt(eps / (4 (n-1)^2 + eps))``."""
    if eps <= 0:
        raise ParameterError("eps must be positive")
    return 2 - n / 2 + (n / 2) * math.sqrt(eps / (4 * (n - 1) ** 2 + eps))


def mazya_p_star(n, eps):
    """Threshold ``n / (2 - theta)``: ``|X|^theta`` has second derivatives in ``L_p`` near 0 iff ``p`` is below it."""
    return n / (2 - mazya_theta(n, eps))


@dataclass
class MazyaReport:
    n: int
    eps: float
    theta: float
    p_star: float
    residual: float
    residuals: list

    def to_dict(self):
        return {"n": self.n, "eps": self.eps, "theta": self.theta, "p_star": self.p_star, "residual": self.residual}


def _radial_hessian(X, theta):
    r = np.linalg.norm(X, axis=-1)
    xh = X / r[..., None]
    n = X.shape[-1]
    c = theta * r ** (theta - 2)
    return c[..., None, None] * (np.eye(n) + (theta - 2) * xh[..., :, None] * xh[..., None, :])


def _bump_hessian(X, c, R, k):
    """Hessian of ``psi(X) = exp(-1/(1-t)) (1 + X . k)``, ``t = |X-c|^2/R^2``."""
    d = X - c
    t = np.sum(d * d, axis=-1) / R**2
    inside = t < 1
    s = np.where(inside, 1 - t, 1.0)
    e = np.where(inside, np.exp(-1 / s), 0.0)
    # derivatives of e in t: e' = -e/s^2, e'' = e (1 - 2 s) / s^4
    e1 = -e / s**2
    e2 = e * (1 - 2 * s) / s**4
    gt = 2 * d / R**2
    n = X.shape[-1]
    He = e1[..., None, None] * (2 / R**2) * np.eye(n) + e2[..., None, None] * gt[..., :, None] * gt[..., None, :]
    ge = e1[..., None] * gt
    lin = 1 + X @ k
    H = He * lin[..., None, None] + ge[..., :, None] * k[None, :] + k[:, None] * ge[..., None, :]
    return np.where(inside[..., None, None], H, 0.0)


def mazya_counterexample(n=3, eps=1.0, trials=10, order=80, seed=0):
    """``theta``, ``p_star`` and the weak residual of ``|X|^theta``.

    The residual is the largest ``|A(U, V)| / A_abs(U, V)`` over trial bumps
    ``V`` supported away from the origin, where ``A_abs`` integrates the
    absolute values of the four terms of the form.  Gauss-Legendre
    quadrature of order ``order`` per axis on the bump's bounding box.
    """
    if eps <= 0:
        raise ParameterError("eps must be positive")
    theta = mazya_theta(n, eps)
    a, b, c = (n - 2) ** 2 + eps, n * (n - 2), n**2
    rng = np.random.default_rng(seed)
    xg, wg = np.polynomial.legendre.leggauss(order)
    res = []
    for _ in range(trials):
        direction = rng.normal(size=n)
        direction /= np.linalg.norm(direction)
        dist = rng.uniform(0.8, 1.5)
        R = rng.uniform(0.3, 0.6) * dist
        cen = dist * direction
        k = rng.normal(scale=0.5, size=n)
        pts = [cen[i] + R * xg for i in range(n)]
        X = np.stack(np.meshgrid(*pts, indexing="ij"), -1).reshape(-1, n)
        W = np.prod(np.stack(np.meshgrid(*([wg] * n), indexing="ij"), -1).reshape(-1, n), axis=1) * R**n
        HU = _radial_hessian(X, theta)
        HV = _bump_hessian(X, cen, R, k)
        xh = X / np.linalg.norm(X, axis=-1)[:, None]
        LU, LV = np.trace(HU, axis1=1, axis2=2), np.trace(HV, axis1=1, axis2=2)
        RU = np.einsum("pi,pij,pj->p", xh, HU, xh)
        RV = np.einsum("pi,pij,pj->p", xh, HV, xh)
        terms = [a * LU * LV, b * RU * LV, b * LU * RV, c * RU * RV]
        val = abs(sum(float(W @ t) for t in terms))
        mag = sum(float(W @ np.abs(t)) for t in terms)
        res.append(val / mag)
    return MazyaReport(n, eps, theta, mazya_p_star(n, eps), max(res), res)
