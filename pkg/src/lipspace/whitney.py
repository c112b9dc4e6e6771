"""Whitney-array calculus on Lipschitz boundaries.

Traces of grid functions, the compatibility conditions tying a jet together,
the passage between iterated normal derivatives and Whitney arrays, cutoff
multiplication, the mollified lift on a graph, the co-boundary extension and
the integral identity for Taylor remainders along a graph.

Tangential derivatives are taken facet by facet on planar (n = 2)
boundaries; the recursions therefore run in two dimensions.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from . import multiindex as mi
from .errors import (
    ParameterError,
    PreconditionError,
    ResolutionError,
    UnsupportedOrderError,
)
from .geometry import GraphDomain, regularized_distance
from .spaces import GridFunction, WhitneyArray, box_for

MAX_ORDER = 3


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------


@dataclass
class DirichletData:
    """Iterated normal derivatives ``g_0, ..., g_{m-1}`` at boundary nodes."""

    m: int
    boundary: object
    components: list

    def __post_init__(self):
        if len(self.components) != self.m:
            raise ParameterError(f"Dirichlet data of order m={self.m} needs {self.m} components")
        self.components = [np.asarray(g, dtype=float) for g in self.components]

    def __getitem__(self, k):
        return self.components[k]

    def max_abs_diff(self, other):
        return max(float(np.max(np.abs(a - b))) for a, b in zip(self.components, other.components))

    def to_json(self):
        return json.dumps(
            {"m": self.m, "nodes": self.boundary.nodes.tolist(), "components": [g.tolist() for g in self.components]}
        )


def smooth_cutoff(r):
    """``eta(r)``: 1 for r <= 1, 0 for r >= 2, C-infinity in between."""
    r = np.asarray(r, dtype=float)

    def psi(t):
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = np.exp(-1.0 / t[pos])
        return out

    a, b = psi(2.0 - r), psi(r - 1.0)
    return a / (a + b)


@dataclass
class CoKernelParams:
    """Kernel ``K(X,Y) = eta(|X-Y| / (kappa rho_reg(X)))`` normalized to unit mass.

    With ``3/4 rho <= rho_reg <= 5/4 rho`` the choice ``kappa = 3/4`` keeps the
    support radius ``2 kappa rho_reg`` inside ``[1.125 rho, 1.875 rho]``: the
    ball always meets the boundary and never reaches ``2 rho``.
    """

    kappa: float = 0.75
    eta: object = field(default=smooth_cutoff)
    distance: object = None  # callable X -> rho_reg(X); default regularized_distance


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------


def _interp_grid(U, arr, pts):
    """Multilinear interpolation of a full-grid array (ghosts included).

    Returns NaN wherever a corner with positive weight lies outside the
    sampled box, outside the domain, or holds a non-finite value.
    """
    n = U.dim
    origin = U.origin - U.margin * U.h
    rel = (pts - origin) / U.h
    base = np.floor(rel).astype(int)
    frac = rel - base
    out = np.zeros(pts.shape[0])
    ok = np.ones(pts.shape[0], dtype=bool)
    shape = np.array(arr.shape)
    for corner in np.ndindex(*(2,) * n):
        idx = base + np.array(corner)
        inb = np.all((idx >= 0) & (idx < shape), axis=1)
        idc = np.clip(idx, 0, shape - 1)
        t = tuple(idc[:, k] for k in range(n))
        w = np.prod(np.where(np.array(corner) == 1, frac, 1 - frac), axis=1)
        v = arr[t]
        good = inb & U.full_mask[t] & np.isfinite(v)
        ok &= good | (w == 0)
        out += np.where(w == 0, 0.0, w * np.where(good, v, 0.0))
    out[~ok] = np.nan
    return out


def restrict_to_boundary(U, arr, boundary, max_shift=6):
    """Quadratic one-sided extrapolation of a core-grid array onto boundary nodes.

    Samples are taken on the three nearest usable cell-centre layers along the
    grid axis most aligned with the inward normal (ties go to the last axis);
    nodes where that axis runs out of the grid fall back to the next axis.
    """
    X = boundary.nodes
    nu = boundary.normals
    bias = 1e-9 * np.arange(U.dim)
    ranking = np.argsort(-(np.abs(nu) + bias), axis=1)
    out = np.full(len(X), np.nan)
    for rank in range(U.dim):
        for k in range(U.dim):
            sel = np.flatnonzero((ranking[:, rank] == k) & ~np.isfinite(out))
            if sel.size == 0 or np.all(np.abs(nu[sel, k]) < 1e-12):
                continue
            sel = sel[np.abs(nu[sel, k]) >= 1e-12]
            out[sel] = _extrapolate_axis(U, arr, X[sel], -np.sign(nu[sel, k]), k, max_shift)
    if np.any(~np.isfinite(out)):
        raise ResolutionError("boundary extrapolation found no usable interior layers (insufficient margin)")
    return out


def _extrapolate_axis(U, arr, X, d, k, max_shift):
    hk = U.h[k]
    # offset to the first cell-centre coordinate beyond X along d
    rel = (X[:, k] - U.origin[k]) / hk
    first = np.where(d > 0, np.floor(rel) + 1, np.ceil(rel) - 1)
    t0 = np.abs(first - rel) * hk
    t0 = np.where(t0 < 1e-12 * hk, hk, t0)
    out = np.full(len(X), np.nan)
    done = np.zeros(len(X), dtype=bool)
    for shift in range(max_shift):
        ts = [t0 + (shift + j) * hk for j in range(3)]
        vals = []
        for t in ts:
            P = X.copy()
            P[:, k] += d * t
            vals.append(_interp_grid(U, arr, P))
        good = ~done & np.all(np.isfinite(vals), axis=0)
        if np.any(good):
            t_a, t_b, t_c = (t[good] for t in ts)
            va, vb, vc = (v[good] for v in vals)
            la = t_b * t_c / ((t_a - t_b) * (t_a - t_c))
            lb = t_a * t_c / ((t_b - t_a) * (t_b - t_c))
            lc = t_a * t_b / ((t_c - t_a) * (t_c - t_b))
            out[good] = la * va + lb * vb + lc * vc
            done |= good
        if np.all(done):
            break
    return out


def trace_array(U, boundary, m):
    """Whitney array ``{Tr D^alpha U}_{|alpha| <= m-1}`` of a grid function."""
    comps = {}
    for alpha in mi.up_to(boundary.dim, m - 1):
        d = U.derivative(alpha, full=True)
        cols = [restrict_to_boundary(U, d[c], boundary) for c in range(U.ncomp)]
        comps[alpha] = cols[0] if U.ncomp == 1 else np.stack(cols, axis=1)
    return WhitneyArray(m, boundary, comps)


# ---------------------------------------------------------------------------
# compatibility
# ---------------------------------------------------------------------------


@dataclass
class CompatReport:
    max_residual: float
    per_alpha: dict
    tol: float
    passed: bool

    def to_dict(self):
        return {
            "max_residual": self.max_residual,
            "per_alpha": {mi.key(a): v for a, v in self.per_alpha.items()},
            "tol": self.tol,
            "passed": self.passed,
        }


def _columns(f):
    return f[:, None] if f.ndim == 1 else f


def compat_residuals(arr):
    """Per-node residual ``d_tau f_alpha - sum_j tau_j f_{alpha+e_j}`` for |alpha| <= m-2."""
    b = arr.boundary
    out = {}
    for alpha in mi.up_to(arr.n, arr.m - 2):
        f = _columns(arr[alpha])
        res = np.zeros(f.shape)
        for c in range(f.shape[1]):
            dt = b.tangential_derivative(f[:, c])
            pred = sum(b.tangents[:, j] * _columns(arr[mi.add(alpha, mi.unit(arr.n, j))])[:, c] for j in range(arr.n))
            res[:, c] = dt - pred
        out[alpha] = res
    return out


def compat_check(arr, tol):
    """Check the tangential compatibility conditions of a Whitney array."""
    if arr.m == 1:
        return CompatReport(0.0, {}, tol, True)
    res = compat_residuals(arr)
    per = {a: float(np.max(np.abs(r))) for a, r in res.items()}
    worst = max(per.values())
    return CompatReport(worst, per, tol, bool(worst <= tol))


# ---------------------------------------------------------------------------
# normal derivatives <-> Whitney arrays
# ---------------------------------------------------------------------------


def whitney_to_dirichlet(arr):
    """``g_k = sum_{|alpha|=k} (k!/alpha!) nu^alpha f_alpha``."""
    nu = arr.boundary.normals
    gs = []
    for k in range(arr.m):
        g = 0.0
        for alpha in mi.of_order(arr.n, k):
            c = math.factorial(k) / mi.fact(alpha) * mi.power(nu, alpha)
            f = arr[alpha]
            g = g + (c[:, None] * f if f.ndim == 2 else c * f)
        gs.append(np.asarray(g, dtype=float))
    return DirichletData(arr.m, arr.boundary, gs)


def _tangential_gradient(boundary, f):
    f = _columns(f)
    g = np.stack([boundary.tangential_gradient(f[:, c]) for c in range(f.shape[1])], axis=-1)
    return g  # (N, n, l)


def dirichlet_to_whitney(g):
    """Build the Whitney array of Dirichlet data by the normal/tangential recursion.

    For ``|alpha| = l`` the component is ``nu^alpha g_l`` plus a combination
    of tangential gradients of components of order ``l - 1``:

        (alpha!/l!) sum_{mu+delta+e_j=alpha, |theta|=|delta|}
            (|delta|!/delta!) (|mu|!/mu!) (|theta|!/theta!)
            nu^{delta+theta} (grad_tan f_{mu+theta})_j
    """
    if g.m > MAX_ORDER:
        raise UnsupportedOrderError(f"orders m <= {MAX_ORDER} are supported")
    b = g.boundary
    n = b.dim
    nu = b.normals
    vec = g[0].ndim == 2
    comps = {(0,) * n: np.array(g[0], dtype=float)}
    grads = {}
    for l in range(1, g.m):
        for alpha in mi.of_order(n, l):
            base = mi.power(nu, alpha)
            val = base[:, None] * _columns(g[l])
            for j in range(n):
                if alpha[j] == 0:
                    continue
                rest = mi.sub(alpha, mi.unit(n, j))
                for mu, delta in mi.splittings(rest):
                    cmd = math.factorial(sum(delta)) / mi.fact(delta) * math.factorial(sum(mu)) / mi.fact(mu)
                    for theta in mi.of_order(n, sum(delta)):
                        src = mi.add(mu, theta)
                        if src not in grads:
                            grads[src] = _tangential_gradient(b, comps[src])
                        c = (
                            mi.fact(alpha)
                            / math.factorial(l)
                            * cmd
                            * math.factorial(sum(theta))
                            / mi.fact(theta)
                            * mi.power(nu, mi.add(delta, theta))
                        )
                        val = val + c[:, None] * grads[src][:, j, :]
            comps[alpha] = val if vec else val[:, 0]
    return WhitneyArray(g.m, b, comps)


def normal_derivatives(U, boundary, m):
    """``g_k = Tr (nu . grad)^k U`` with ``nu`` frozen per facet."""
    return whitney_to_dirichlet(trace_array(U, boundary, m))


# ---------------------------------------------------------------------------
# module structure
# ---------------------------------------------------------------------------


def multiply_cutoff(psi, arr):
    """Leibniz product ``(psi f)_alpha = sum_{b+c=alpha} alpha!/(b! c!) D^b psi f_c``.

    ``psi(beta, X)`` returns ``D^beta psi`` at points ``X`` (see
    :func:`lipspace.spaces.expression_derivatives`).
    """
    X = arr.boundary.nodes
    dpsi = {}
    comps = {}
    for alpha in arr.indices():
        acc = 0.0
        for beta, gamma in mi.splittings(alpha):
            if beta not in dpsi:
                dpsi[beta] = np.asarray(psi(beta, X), dtype=float)
            c = mi.binom(alpha, beta) * dpsi[beta]
            f = arr[gamma]
            acc = acc + (c[:, None] * f if f.ndim == 2 else c * f)
        comps[alpha] = np.asarray(acc, dtype=float) * np.ones_like(arr[alpha])
    return WhitneyArray(arr.m, arr.boundary, comps)


# ---------------------------------------------------------------------------
# mollified lift on a graph
# ---------------------------------------------------------------------------


@dataclass
class MollifiedLift:
    """Evaluator of ``F^eps(X) = sum_k (1/k!) [(X_n - phi)^k f_{k e_n}] * eta_eps (X')``.

    ``compatible`` records the outcome of the compatibility check (``None``
    when the boundary is too coarse to run it).
    """

    arr: WhitneyArray
    domain: GraphDomain
    eps: float
    compatible: object = None
    order: int = 48

    def __post_init__(self):
        if self.domain.n != 2:
            raise ParameterError("the mollified lift is implemented for n = 2")
        t, w = np.polynomial.legendre.leggauss(self.order)
        z = np.exp(-1.0 / (1.0 - t**2))
        self._t, self._w = t, w * z / np.sum(w * z)
        b = self.arr.boundary
        order = np.argsort(b.nodes[:, 0])
        self._x = b.nodes[order, 0]
        self._comp = {k: np.asarray(self.arr[(0, k)])[order] for k in range(self.arr.m)}

    def _boundary_fn(self, k, xp):
        if self.domain.periodic:
            return np.interp(xp, self._x, self._comp[k], period=self.domain.L)
        return np.interp(xp, self._x, self._comp[k])

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        xp, xn = X[..., 0], X[..., 1]
        out = np.zeros(xp.shape)
        for t, w in zip(self._t, self._w):
            y = xp - self.eps * t
            gap = xn - self.domain.phi(y)
            term = np.zeros_like(out)
            for k in range(self.arr.m):
                term = term + gap**k / math.factorial(k) * self._boundary_fn(k, y)
            out = out + w * term
        return out


def mollified_lift(arr, domain, eps, tol=None, strict=True):
    """Lift a compatible Whitney array on a graph to a smooth function ``F^eps``."""
    compatible = None
    if arr.m > 1:
        try:
            tol = tol if tol is not None else 1e-2 * max(1.0, arr.max_abs())
            compatible = compat_check(arr, tol).passed
        except ResolutionError:
            compatible = None
        if compatible is False and strict:
            raise PreconditionError("Whitney array fails the compatibility check")
    return MollifiedLift(arr, domain, float(eps), compatible)


# ---------------------------------------------------------------------------
# co-boundary extension
# ---------------------------------------------------------------------------


def taylor_field(arr, X, idx):
    """``P(X, Y_i) = sum_{|b|<=m-1} f_b(Y_i) (X - Y_i)^b / b!`` for node indices ``idx``."""
    d = X[:, None, :] - arr.boundary.nodes[idx][None]
    out = 0.0
    for beta in arr.indices():
        c = mi.power(d, beta) / mi.fact(beta)
        out = out + c * arr[beta][idx][None]
    return out


def extension_values(arr, X, domain, ker=None, chunk=256):
    """``(E f)(X) = int K(X,Y) P(X,Y) dsigma_Y`` at interior points ``X``."""
    ker = ker or CoKernelParams()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if ker.distance is None:
        rr = regularized_distance(domain, X)
    else:
        rr = np.asarray(ker.distance(X), dtype=float)
    b = arr.boundary
    Y = b.nodes
    w = b.weights
    out = np.empty(len(X))
    for s in range(0, len(X), chunk):
        xs = X[s : s + chunk]
        rad = ker.kappa * rr[s : s + chunk]
        dist = np.linalg.norm(xs[:, None, :] - Y[None], axis=2)
        K = ker.eta(dist / rad[:, None]) * w[None]
        mass = K.sum(axis=1)
        if np.any(mass <= 0):
            raise ResolutionError("co-boundary kernel has no boundary nodes in its support (boundary too coarse)")
        cols = np.flatnonzero(np.any(K > 0, axis=0))
        P = taylor_field(arr, xs, cols)
        out[s : s + chunk] = np.sum(K[:, cols] * P, axis=1) / mass
    return out


def extend_besov(arr, domain, h, ker=None, margin=2):
    """Grid samples of the co-boundary extension (NaN outside the domain)."""

    def func(X):
        pts = X.reshape(-1, X.shape[-1])
        out = np.full(pts.shape[0], np.nan)
        inside = domain.contains(pts)
        if np.any(inside):
            out[inside] = extension_values(arr, pts[inside], domain, ker)
        return out.reshape(X.shape[:-1])

    return GridFunction.from_callable(func, domain, h, margin=margin)


def kernel_mass(arr_boundary, X, domain, ker=None):
    """Mass of the normalized kernel, its support radius and ``rho`` at ``X``."""
    ker = ker or CoKernelParams()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    rr = regularized_distance(domain, X)
    rad = ker.kappa * rr
    dist = np.linalg.norm(X[:, None, :] - arr_boundary.nodes[None], axis=2)
    K = ker.eta(dist / rad[:, None]) * arr_boundary.weights[None]
    mass = K.sum(axis=1)
    return (K / mass[:, None]).sum(axis=1), 2 * rad, domain.distance(X)


# ---------------------------------------------------------------------------
# remainder identity along a graph
# ---------------------------------------------------------------------------


@dataclass
class RemainderIdentityReport:
    max_abs_error: float
    max_rel_error: float
    samples: list


def remainder_identity_check(deriv, domain, m, pairs, epsabs=1e-13):
    """Compare both sides of the integral identity for ``R_alpha`` along a graph.

    ``deriv(alpha, X)`` gives the jet ``f_alpha`` (traces of a smooth field,
    hence compatible).  For every pair ``(X', Y')`` and every ``|alpha| <=
    m-2`` the Taylor remainder ``R_alpha(Phi(X'), Phi(Y'))`` is compared with

        sum_j sum_{|g|=m-2-|alpha|} (1/g!) int_0^1 [f_{alpha+g+e_j}(Phi(Z_t))
            - f_{alpha+g+e_j}(Phi(Y'))] (Phi(X') - Phi(Z_t))^g
            d Phi_j(Z_t)/dt dt,   Z_t = Y' + t (X' - Y').
    """
    if domain.n != 2:
        raise ParameterError("the remainder identity check runs on planar graphs")

    def Phi(x):
        x = np.asarray(x, dtype=float)
        return np.stack([x, domain.phi(x)], axis=-1)

    def f(alpha, x):
        return float(deriv(tuple(alpha), Phi(np.array([x])))[0])

    n = 2
    worst_abs, worst_rel, rows = 0.0, 0.0, []
    kinks = np.arange(-domain.N * 4, domain.N * 8) * domain.h
    for xp, yp in pairs:
        for alpha in mi.up_to(n, m - 2):
            d = Phi(xp) - Phi(yp)
            lhs = f(alpha, xp)
            for beta in mi.up_to(n, m - 1 - sum(alpha)):
                lhs -= f(mi.add(alpha, beta), yp) * float(mi.power(d, beta)) / mi.fact(beta)
            lo, hi = min(xp, yp), max(xp, yp)
            inner = kinks[(kinks > lo) & (kinks < hi)]
            brk = sorted(set(((inner - yp) / (xp - yp)).tolist())) if xp != yp else []
            rhs = 0.0
            for j in range(n):
                for gam in mi.of_order(n, m - 2 - sum(alpha)):
                    idx = mi.add(mi.add(alpha, gam), mi.unit(n, j))
                    fy = f(idx, yp)

                    def integrand(t, idx=idx, gam=gam, j=j, fy=fy):
                        z = yp + t * (xp - yp)
                        dz = Phi(xp) - Phi(z)
                        slope = 1.0 if j == 0 else float(domain.grad_phi(np.array([z]))[0, 0])
                        return (f(idx, z) - fy) * float(mi.power(dz, gam)) * slope * (xp - yp)

                    pieces = [0.0] + brk + [1.0]
                    for a, bb in zip(pieces[:-1], pieces[1:]):
                        if bb > a:
                            rhs += quad(integrand, a, bb, epsabs=epsabs, epsrel=1e-12, limit=200)[0] / mi.fact(gam)
            err = abs(lhs - rhs)
            worst_abs = max(worst_abs, err)
            worst_rel = max(worst_rel, err / max(abs(lhs), 1e-300) if abs(lhs) > 1e-12 else err)
            rows.append({"x": xp, "y": yp, "alpha": mi.key(alpha), "lhs": lhs, "rhs": rhs})
    return RemainderIdentityReport(worst_abs, worst_rel, rows)
