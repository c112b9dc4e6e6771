"""Gagliardo extension and the flattening map of a Lipschitz graph domain.

The extension of a boundary function is

    (T phi)(x', x_n) = int zeta(t) phi(x' + x_n t) dt,

and the flattening map sends the half-space onto the graph domain by
``lambda(x) = (x', kappa0 x_n + T phi(x))`` with ``kappa0 = 1 + C M``.

For n = 2 the graph is piecewise linear, so ``phi''`` is a sum of point masses
at the kinks.  ``T phi`` and all its derivatives are then finite sums over the
kinks inside the window ``|y - x'| < x_n``, evaluated from tabulated moments of
``zeta``; no quadrature runs across a kink.  For n = 3 a polar Gauss rule on
the unit disk is used.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import sympy as sp
from scipy.interpolate import CubicHermiteSpline

from . import multiindex as mi
from .errors import DomainError, NumericError, ParameterError
from .geometry import GraphDomain, bmo_seminorm

FLATTEN_C = 4.0


def _bump(r2):
    out = np.zeros_like(r2, dtype=float)
    inside = r2 < 1
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


@dataclass
class Mollifier:
    """Radial bump ``c exp(-1/(1-|t|^2)_+)`` on R^d with unit mass.

    ``nodes`` and ``weights`` form a quadrature for ``int zeta(t) g(t) dt``
    (the weights already include ``zeta``): Gauss-Legendre with ``order``
    nodes per dimension, polar in d = 2.
    """

    dim: int = 1
    order: int = 64
    c: float = field(init=False)
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x, w = np.polynomial.legendre.leggauss(self.order)
        if self.dim == 1:
            nodes, base = x[:, None], w
        elif self.dim == 2:
            r = 0.5 * (x + 1)
            wr = 0.5 * w * r
            th = 2 * np.pi * (np.arange(self.order) + 0.5) / self.order
            nodes = (r[:, None, None] * np.stack([np.cos(th), np.sin(th)], -1)[None]).reshape(-1, 2)
            base = np.repeat(wr, self.order) * (2 * np.pi / self.order)
        else:
            raise ParameterError("mollifier dimension must be 1 or 2")
        raw = base * _bump(np.sum(nodes**2, axis=1))
        self.c = 1.0 / raw.sum()
        self.nodes = nodes
        self.base_weights = base
        self.weights = self.c * raw

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.dim == 1 and (t.ndim == 0 or t.shape[-1] != 1):
            return self.c * _bump(t**2)
        return self.c * _bump(np.sum(t**2, axis=-1))

    def mass(self):
        return float(self.weights.sum())

    def abs_first_moment(self):
        return float(self.weights @ np.linalg.norm(self.nodes, axis=1))


# ---------------------------------------------------------------------------
# n = 2 kink calculus
# ---------------------------------------------------------------------------


class _Moments1D:
    """Tail moments ``Z0(u) = int_u^1 zeta``, ``Z1(u) = int_u^1 t zeta``."""

    def __init__(self, moll, n_tab=4001):
        self.moll = moll
        u = np.linspace(-1.0, 1.0, n_tab)
        x, w = np.polynomial.legendre.leggauss(20)
        a, b = u[:-1], u[1:]
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        t = mid[:, None] + half[:, None] * x[None]
        z = moll(t)
        c0 = np.sum(w * z, axis=1) * half
        c1 = np.sum(w * z * t, axis=1) * half
        z0 = np.concatenate([np.cumsum(c0[::-1])[::-1], [0.0]])
        z1 = np.concatenate([np.cumsum(c1[::-1])[::-1], [0.0]])
        zu = moll(u)
        self._z0 = CubicHermiteSpline(u, z0, -zu)
        self._z1 = CubicHermiteSpline(u, z1, -u * zu)

    def z0(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(u <= -1, 1.0, np.where(u >= 1, 0.0, self._z0(np.clip(u, -1, 1))))

    def z1(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(np.abs(u) >= 1, 0.0, self._z1(np.clip(u, -1, 1)))


@lru_cache(maxsize=None)
def _kink_kernel(alpha):
    """Kernel h with ``D^alpha T phi = x_n^{1-|alpha|} sum_k c_k h(u_k)`` (n = 2).

    Built from the second-order kernels ``(1, u, u^2) zeta(u)`` by the rules
    ``d/dx' [h / x_n^k] = -h' / x_n^{k+1}`` and
    ``d/dx_n [h / x_n^k] = (-u h' - k h) / x_n^{k+1}``.
    """
    a1, a2 = alpha
    if a1 + a2 < 2:
        raise ParameterError("kink kernels start at order 2")
    u = sp.Symbol("u")
    z = sp.exp(-1 / (1 - u**2))
    # peel off a second-order start, preferring x' derivatives
    if a1 >= 2:
        h, rest = z, (a1 - 2, a2)
    elif a1 == 1:
        h, rest = u * z, (0, a2 - 1)
    else:
        h, rest = u**2 * z, (0, a2 - 2)
    k = 1
    for _ in range(rest[0]):
        h = -sp.diff(h, u)
        k += 1
    for _ in range(rest[1]):
        h = -u * sp.diff(h, u) - k * h
        k += 1
    return sp.lambdify(u, sp.simplify(h), "numpy")


def _eval_kernel(fn, c, u):
    out = np.zeros_like(u)
    inside = np.abs(u) < 1
    if np.any(inside):
        out[inside] = c * fn(u[inside])
    return out


@lru_cache(maxsize=None)
def _disk_kernel(alpha):
    """Kernel h_alpha(u) with ``D^alpha T phi = x_n^{-|alpha|} int h_alpha(u) phi(x'+x_n u) du`` (n = 3)."""
    u1, u2 = sp.symbols("u1 u2")
    h = sp.exp(-1 / (1 - u1**2 - u2**2))
    k = 2
    for _ in range(alpha[0]):
        h = -sp.diff(h, u1)
        k += 1
    for _ in range(alpha[1]):
        h = -sp.diff(h, u2)
        k += 1
    for _ in range(alpha[2]):
        h = -u1 * sp.diff(h, u1) - u2 * sp.diff(h, u2) - k * h
        k += 1
    return sp.lambdify((u1, u2), h, "numpy")


# ---------------------------------------------------------------------------
# Gagliardo extension
# ---------------------------------------------------------------------------


class GagliardoExtension:
    """Evaluator of ``T phi`` and its derivatives for a graph domain."""

    def __init__(self, domain, mollifier=None):
        if not isinstance(domain, GraphDomain):
            raise ParameterError("Gagliardo extension needs a GraphDomain")
        self.domain = domain
        self.n = domain.n
        self.moll = mollifier if mollifier is not None else Mollifier(self.n - 1)
        if self.n == 2:
            self._mom = _Moments1D(self.moll)

    # -- n = 2 ----------------------------------------------------------------
    def _kinks(self, xp, xn):
        """Yield (c_k, u_k) for every grid kink that may fall in the window."""
        d = self.domain
        h = d.h
        lo = np.floor((xp - xn) / h).astype(int)
        hi = np.ceil((xp + xn) / h).astype(int)
        span = int(np.max(hi - lo)) if xp.size else 0
        for j in range(span + 1):
            k = lo + j
            c = d.slope_at_facet(k) - d.slope_at_facet(k - 1)
            with np.errstate(divide="ignore", invalid="ignore"):
                u = np.where(xn > 0, (k * h - xp) / xn, 2.0)
            u = np.where(k <= hi, u, 2.0)
            yield c, u

    def _value_2(self, xp, xn):
        d = self.domain
        left = xp - xn
        kl = np.floor(left / d.h).astype(int)
        s0 = d.slope_at_facet(kl)
        base = d.phi(left) + s0 * xn
        acc = np.zeros_like(xp)
        for c, u in self._kinks(xp, xn):
            inside = np.abs(u) < 1
            m = self._mom.z1(u) - u * self._mom.z0(u)
            acc += np.where(inside, c * m, 0.0)
        return base + xn * acc

    def _grad_2(self, xp, xn):
        d = self.domain
        kl = np.floor((xp - xn) / d.h).astype(int)
        gx = d.slope_at_facet(kl).astype(float)
        gn = np.zeros_like(xp)
        for c, u in self._kinks(xp, xn):
            inside = np.abs(u) < 1
            gx = gx + np.where(inside, c * self._mom.z0(u), 0.0)
            gn = gn + np.where(inside, c * self._mom.z1(u), 0.0)
        return np.stack([gx, gn], axis=-1)

    def _deriv_2(self, alpha, xp, xn):
        fn = _kink_kernel(tuple(alpha))
        acc = np.zeros_like(xp)
        for c, u in self._kinks(xp, xn):
            acc += _eval_kernel(fn, self.moll.c, u) * c
        return acc * xn ** (1 - sum(alpha))

    # -- n = 3 ----------------------------------------------------------------
    def _samples_3(self, xp, xn):
        return xp[:, None, :] + xn[:, None, None] * self.moll.nodes[None]

    def _value_3(self, xp, xn):
        Y = self._samples_3(xp, xn)
        return self.domain.phi(Y) @ self.moll.weights

    def _grad_3(self, xp, xn):
        Y = self._samples_3(xp, xn)
        g = self.domain.grad_phi(Y)
        w = self.moll.weights
        gx = np.einsum("pkj,k->pj", g, w)
        gn = np.einsum("pkj,kj,k->p", g, self.moll.nodes, w)
        return np.concatenate([gx, gn[:, None]], axis=1)

    def _deriv_3(self, alpha, xp, xn):
        fn = _disk_kernel(tuple(alpha))
        t = self.moll.nodes
        hk = self.moll.c * fn(t[:, 0], t[:, 1]) * self.moll.base_weights
        Y = self._samples_3(xp, xn)
        return (self.domain.phi(Y) @ hk) * xn ** (-float(sum(alpha)))

    # -- public ---------------------------------------------------------------
    def _split(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n:
            raise ParameterError(f"points must have {self.n} coordinates")
        if np.any(x[:, -1] < 0):
            raise DomainError("Gagliardo extension needs x_n >= 0")
        xp = x[:, 0] if self.n == 2 else x[:, :-1]
        return xp, x[:, -1]

    def value(self, x):
        xp, xn = self._split(x)
        out = self._value_2(xp, xn) if self.n == 2 else self._value_3(xp, xn)
        on = xn == 0
        if np.any(on):
            out[on] = self.domain.phi(xp[on])
        return out

    def gradient(self, x):
        """Full gradient ``(grad_{x'} T phi, d T phi / d x_n)``."""
        xp, xn = self._split(x)
        if self.n == 2:
            return self._grad_2(xp, xn)
        return self._grad_3(xp, xn)

    def derivative(self, alpha, x):
        """``D^alpha T phi`` (plain partial derivatives), any order."""
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.n:
            raise ParameterError("multi-index length must equal n")
        k = sum(alpha)
        if k == 0:
            return self.value(x)
        if k == 1:
            return self.gradient(x)[:, alpha.index(1)]
        xp, xn = self._split(x)
        if np.any(xn <= 0):
            raise DomainError("higher derivatives need x_n > 0")
        if self.n == 2:
            return self._deriv_2(alpha, xp, xn)
        return self._deriv_3(alpha, xp, xn)

    def value_by_quadrature(self, x):
        """Plain tensor-Gauss evaluation, used as an independent cross-check."""
        xp, xn = self._split(x)
        if self.n == 2:
            xp = xp[:, None]
        Y = xp[:, None, :] + xn[:, None, None] * self.moll.nodes[None]
        if self.n == 2:
            Y = Y[..., 0]
        return self.domain.phi(Y) @ self.moll.weights


def gagliardo_extend(domain, x, mollifier=None):
    """``(T phi)(x)`` for the graph function of ``domain``."""
    return GagliardoExtension(domain, mollifier).value(x)


# ---------------------------------------------------------------------------
# flattening map
# ---------------------------------------------------------------------------


@dataclass
class FlatteningMap:
    """Bi-Lipschitz map ``lambda`` from the half-space onto a graph domain."""

    domain: GraphDomain
    C: float = FLATTEN_C
    mollifier: Mollifier = None

    def __post_init__(self):
        self.ext = GagliardoExtension(self.domain, self.mollifier)
        self.mollifier = self.ext.moll
        self.M = self.domain.lip_const
        self.kappa0 = 1.0 + self.C * self.M

    @property
    def comparability(self):
        """Bounds on ``(lambda_n(x) - phi(x')) / x_n``.

        ``|T phi - phi| <= M x_n int |t| zeta`` gives the bracket
        ``kappa0 -+ M * (abs first moment)``.
        """
        m1 = self.mollifier.abs_first_moment()
        return self.kappa0 - self.M * m1, self.kappa0 + self.M * m1

    def lam(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = x.copy()
        out[:, -1] = self.kappa0 * x[:, -1] + self.ext.value(x)
        return out

    def jacobian(self, x):
        """Jacobi matrix of ``lambda``; shape (P, n, n)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = x.shape[1]
        J = np.zeros((x.shape[0], n, n))
        J[:, np.arange(n - 1), np.arange(n - 1)] = 1.0
        g = self.ext.gradient(x)
        J[:, -1, :] = g
        J[:, -1, -1] += self.kappa0
        return J

    def kappa(self, X, tol=1e-13, max_iter=200):
        """Inverse map by bisection followed by Newton polishing."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        xp = X[:, :-1]
        phi = self.domain.phi(xp[:, 0] if self.domain.n == 2 else xp)
        gap = X[:, -1] - phi
        if np.any(gap < -1e-14):
            raise DomainError("point lies below the graph")
        gap = np.maximum(gap, 0.0)
        lo = np.zeros(len(X))
        slope_lo = self.comparability[0]
        hi = gap / slope_lo + 1e-12

        def f(t):
            y = np.concatenate([xp, t[:, None]], axis=1)
            return self.lam(y)[:, -1] - X[:, -1]

        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            fm = f(mid)
            lo = np.where(fm <= 0, mid, lo)
            hi = np.where(fm > 0, mid, hi)
            if np.max(hi - lo) < 1e-9 * (1 + np.max(gap)):
                break
        t = 0.5 * (lo + hi)
        for _ in range(8):
            y = np.concatenate([xp, t[:, None]], axis=1)
            r = f(t)
            d = self.kappa0 + self.ext.gradient(y)[:, -1]
            t = np.maximum(t - r / d, 0.0)
            if np.max(np.abs(r)) < tol:
                break
        res = np.abs(f(t))
        if np.any(res > 1e-9):
            raise NumericError(f"inverse flattening did not converge (residual {res.max():.3e})")
        return np.concatenate([xp, t[:, None]], axis=1)


def lambda_map(fmap, x):
    return fmap.lam(x)


def kappa_map(fmap, X):
    return fmap.kappa(X)


def jacobian_lambda(fmap, x):
    return fmap.jacobian(x)


# ---------------------------------------------------------------------------
# estimates of the Gagliardo lemmas
# ---------------------------------------------------------------------------


@dataclass
class GagliardoReport:
    """Empirical constants of the pointwise and BMO bounds for ``T phi``.

    When ``[grad phi]_BMO`` vanishes the ratios are replaced by the absolute
    suprema and ``absolute`` is set.
    """

    grad_phi_bmo: float
    derivative_constants: dict
    value_constant: float
    grad_bmo_ratio: float
    grad_T_bmo: float
    absolute: bool

    def to_dict(self):
        return {
            "grad_phi_bmo": self.grad_phi_bmo,
            "derivative_constants": {str(k): v for k, v in self.derivative_constants.items()},
            "value_constant": self.value_constant,
            "grad_bmo_ratio": self.grad_bmo_ratio,
            "grad_T_bmo": self.grad_T_bmo,
            "absolute": self.absolute,
        }


def boundary_gradient_bmo(domain, samples_per_cell=16, radii=None):
    """``[grad phi]_BMO`` over one period of the graph (n = 2 or 3)."""
    L = domain.L
    m = domain.N * samples_per_cell
    s = (np.arange(m) + 0.5) * (L / m)
    if radii is None:
        radii = L * np.array([1 / 64, 1 / 32, 1 / 16, 1 / 8, 1 / 4, 1 / 2])
    if domain.n == 2:
        pts = s[:, None]
        vals = domain.grad_phi(s)
        # periodic images on both sides so every ball is full
        pts_ext = np.concatenate([pts - L, pts, pts + L])
        vals_ext = np.concatenate([vals, vals, vals])
        rep = bmo_seminorm(pts_ext, vals_ext, radii, centers=pts, star=False)
    else:
        k = domain.N * max(2, samples_per_cell // 4)
        t = (np.arange(k) + 0.5) * (L / k)
        P = np.stack(np.meshgrid(t, t, indexing="ij"), -1).reshape(-1, 2)
        V = domain.grad_phi(P)
        shifts = [np.array([a, b]) for a in (-L, 0, L) for b in (-L, 0, L)]
        rep = bmo_seminorm(np.concatenate([P + s_ for s_ in shifts]), np.concatenate([V] * 9), radii, centers=P[::7], star=False)
    return rep.seminorm


def verify_gagliardo_estimates(fmap, points, max_order=3, radii=None, bmo_points=None, bmo_radii=None):
    """Empirical constants in the Gagliardo pointwise and BMO bounds.

    ``points`` are half-space points with ``x_n > 0``.  ``bmo_points`` is a
    dense half-space sample used for ``[grad T phi]_BMO`` (defaults to a
    uniform grid over one cell).
    """
    dom = fmap.domain
    ext = fmap.ext
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(X[:, -1] <= 0):
        raise DomainError("estimate grid must avoid x_n = 0")
    xn = X[:, -1]
    bmo = boundary_gradient_bmo(dom, radii=radii)
    absolute = bmo <= 1e-14
    scale = 1.0 if absolute else bmo
    consts = {}
    for k in range(2, max_order + 1):
        sup = 0.0
        for alpha in mi.of_order(dom.n, k):
            d = ext.derivative(alpha, X)
            sup = max(sup, float(np.max(np.abs(d) * xn ** (k - 1))))
        consts[k] = sup / scale
    xp = X[:, 0] if dom.n == 2 else X[:, :-1]
    vc = float(np.max(np.abs(ext.value(X) - dom.phi(xp)) / xn)) / scale
    if bmo_points is None:
        L = dom.L
        g = 48 if dom.n == 2 else 20
        t = (np.arange(g) + 0.5) * (L / g)
        axes = [t] * (dom.n - 1) + [(np.arange(g // 2) + 0.5) * (L / g)]
        bmo_points = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, dom.n)
    if bmo_radii is None:
        bmo_radii = dom.L * np.array([1 / 8, 1 / 4])
    grad = ext.gradient(bmo_points)
    step = max(1, len(bmo_points) // 1500)
    gT = bmo_seminorm(bmo_points, grad, bmo_radii, centers=bmo_points[::step], star=False).seminorm
    return GagliardoReport(
        grad_phi_bmo=bmo,
        derivative_constants=consts,
        value_constant=vc,
        grad_bmo_ratio=gT / scale,
        grad_T_bmo=gT,
        absolute=bool(absolute),
    )
