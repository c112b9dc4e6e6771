"""Half-space Green functions of the Laplacian and the bilaplacian.

Sign convention: ``D = -i d``, so the model operators are ``L = -Delta``
(m = 1) and ``L = Delta^2`` (m = 2), both with symbol ``|xi|^{2m}``.  The
Dirichlet Green function is Boggio's

    G(x, y) = k r^{2m-n} int_1^{|x - ybar| / r} (v^2 - 1)^{m-1} v^{1-n} dv,
    r = |x - y|,  k = 1 / (n e_n 4^{m-1} ((m-1)!)^2),

with ``e_n`` the volume of the unit ball.  For m = 1 this is the method of
images.  The residual ``R = F(x - y) - G(x, y)`` is evaluated from the
antiderivative of the integrand so that the two singular parts cancel
analytically.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import multiindex as mi
from .errors import MultiIndexError, NumericError, ParameterError, SingularityError


@dataclass(frozen=True)
class ModelOperator:
    """``-Delta`` (``kind="laplace"``) or ``Delta^2`` (``kind="bilaplace"``) in ``R^n``."""

    kind: str
    n: int

    def __post_init__(self):
        if self.kind not in ("laplace", "bilaplace"):
            raise ParameterError(f"unknown model operator {self.kind!r}")
        if self.n not in (2, 3):
            raise ParameterError("model operators are implemented for n in {2, 3}")

    @property
    def m(self):
        return 1 if self.kind == "laplace" else 2

    @property
    def kappa(self):
        """Strong ellipticity constant (the symbol is ``|xi|^{2m}``)."""
        return 1.0

    @property
    def boggio_constant(self):
        n, m = self.n, self.m
        e_n = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
        return 1.0 / (n * e_n * 4 ** (m - 1) * math.factorial(m - 1) ** 2)

    def apply_fd(self, u, x, h):
        """``L u`` at ``x`` by central differences with step ``h``."""
        x = np.asarray(x, dtype=float)
        lap = lambda f, z: sum(
            (f(z + h * e) - 2 * f(z) + f(z - h * e)) / h**2 for e in np.eye(self.n)
        )
        if self.m == 1:
            return -lap(u, x)
        return lap(lambda z: lap(u, z), x)


def _norm(x):
    return np.linalg.norm(np.asarray(x, dtype=float), axis=-1)


def _reflect(y):
    y = np.array(y, dtype=float, copy=True)
    y[..., -1] *= -1
    return y


def fundamental_solution(op, x):
    """Free-space fundamental solution ``F`` with ``L F = delta``."""
    r = _norm(x)
    if np.any(r == 0):
        raise SingularityError("fundamental solution evaluated at the origin")
    if op.kind == "laplace":
        return -np.log(r) / (2 * np.pi) if op.n == 2 else 1.0 / (4 * np.pi * r)
    return r**2 * np.log(r) / (8 * np.pi) if op.n == 2 else -r / (8 * np.pi)


# ---------------------------------------------------------------------------
# Boggio's formula
# ---------------------------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


def boggio_integral(A, m, n):
    """``int_1^A (v^2 - 1)^{m-1} v^{1-n} dv`` by Gauss-Legendre in ``t = log v``.

    In ``t`` the integrand ``(e^{2t} - 1)^{m-1} e^{(2-n) t}`` is entire, so a
    fixed 64-point rule is exact to rounding for the moderate ``log A`` met
    in practice; larger ``log A`` is split into unit panels.
    """
    A = np.asarray(A, dtype=float)
    T = np.log(A)
    panels = max(1, int(np.ceil(np.max(T, initial=0.0) / 4.0)))
    out = np.zeros_like(T)
    for k in range(panels):
        lo, hi = T * k / panels, T * (k + 1) / panels
        t = 0.5 * (hi - lo)[..., None] * (_GL_X + 1) + lo[..., None]
        g = (np.exp(2 * t) - 1) ** (m - 1) * np.exp((2 - n) * t)
        out += 0.5 * (hi - lo) * np.sum(g * _GL_W, axis=-1)
    return out


def boggio_antiderivative(v, m, n):
    """Closed-form antiderivative of ``(v^2 - 1)^{m-1} v^{1-n}`` for m, n <= 3."""
    v = np.asarray(v, dtype=float)
    table = {
        (1, 2): lambda v: np.log(v),
        (1, 3): lambda v: -1.0 / v,
        (2, 2): lambda v: v**2 / 2 - np.log(v),
        (2, 3): lambda v: v + 1.0 / v,
    }
    if (m, n) not in table:
        raise ParameterError("closed form available for m in {1, 2}, n in {2, 3}")
    return table[(m, n)](v)


def half_space_green(op, x, y):
    """Dirichlet Green function of ``L`` in the upper half-space."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = _norm(x - y)
    if np.any(r == 0):
        raise SingularityError("Green function evaluated on the diagonal")
    A = _norm(x - _reflect(y)) / r
    return op.boggio_constant * r ** (2 * op.m - op.n) * boggio_integral(A, op.m, op.n)


def residual(op, x, y):
    """``R(x, y) = F(x - y) - G(x, y)``, smooth up to and including ``x = y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rho = _norm(x - _reflect(y))
    if op.kind == "laplace":
        return fundamental_solution(op, x - _reflect(y))
    r2 = np.sum((x - y) ** 2, axis=-1)
    k = op.boggio_constant
    if op.n == 3:
        return -k * (rho + r2 / rho)
    return k * (r2 * np.log(rho) - rho**2 / 2 + r2 / 2)


# ---------------------------------------------------------------------------
# Poisson kernels
# ---------------------------------------------------------------------------


def _poisson_mass(n, q):
    """``int_{R^{n-1}} (1 + |t|^2)^{-q} dt``."""
    d = n - 1
    return math.pi ** (d / 2) * math.gamma(q - d / 2) / math.gamma(q)


def poisson_kernel(op, j, x, yp):
    """Kernel ``P_j`` with ``u(x) = sum_j int P_j(x, y') d_n^j u(y', 0) dy'``.

    Laplacian: ``P_0 = 2 x_n / (n e_n |x - y'|^n)``.  Bilaplacian:
    ``P_0 = A_n x_n^3 / |x - y'|^{n+2}`` and ``P_1 = B_n x_n^2 / |x - y'|^n``,
    normalized so that ``P_0`` reproduces 1 and ``P_1`` reproduces ``x_n``.
    """
    if not 0 <= j < op.m:
        raise MultiIndexError(f"Poisson kernel index j={j} needs 0 <= j < m={op.m}")
    x = np.asarray(x, dtype=float)
    yp = np.asarray(yp, dtype=float)
    xn = x[..., -1]
    if np.any(xn <= 0):
        raise ParameterError("Poisson kernel needs x_n > 0")
    dp = x[..., :-1] - yp
    xn = np.broadcast_to(xn[..., None], dp.shape[:-1] + (1,))[..., 0]
    r = _norm(np.concatenate([dp, xn[..., None]], axis=-1))
    n = op.n
    if op.m == 1:
        return xn / r**n / _poisson_mass(n, n / 2)
    if j == 0:
        return xn**3 / r ** (n + 2) / _poisson_mass(n, n / 2 + 1)
    return xn**2 / r**n / _poisson_mass(n, n / 2)


def poisson_extension(op, data, x, nodes, weights):
    """``sum_j int P_j(x, y') g_j(y') dy'`` by a boundary quadrature rule.

    ``data`` is a list of arrays ``g_j`` at ``nodes`` (shape (k, n-1)).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    nodes = np.asarray(nodes, dtype=float).reshape(len(weights), -1)
    out = np.zeros(x.shape[0])
    for j, g in enumerate(data):
        P = poisson_kernel(op, j, x[:, None, :], nodes[None, :, :])
        out += P @ (np.asarray(g, dtype=float) * weights)
    return out


# ---------------------------------------------------------------------------
# residual decay
# ---------------------------------------------------------------------------


def _stencil(order):
    """Central difference stencil (offsets, weights) for ``d^order`` with unit step."""
    return {
        0: ([0], [1.0]),
        1: ([-1, 1], [-0.5, 0.5]),
        2: ([-1, 0, 1], [1.0, -2.0, 1.0]),
        3: ([-2, -1, 1, 2], [-0.5, 1.0, -1.0, 0.5]),
        4: ([-2, -1, 0, 1, 2], [1.0, -4.0, 6.0, -4.0, 1.0]),
    }[order]


def mixed_derivative(func, x, y, alpha, beta, h):
    """``d_x^alpha d_y^beta func(x, y)`` by tensor-product central differences."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    orders = list(alpha) + list(beta)
    axes = [_stencil(o) for o in orders]
    pts, wts = [], []
    for combo in itertools.product(*[range(len(a[0])) for a in axes]):
        off = np.array([axes[i][0][c] for i, c in enumerate(combo)], dtype=float) * h
        pts.append(np.concatenate([x + off[:n], y + off[n:]]))
        wts.append(np.prod([axes[i][1][c] for i, c in enumerate(combo)]))
    pts = np.array(pts)
    vals = func(pts[:, :n], pts[:, n:])
    return float(np.dot(wts, vals)) / h ** sum(orders)


@dataclass
class ResidualReport:
    """Sup of ``|d_x^alpha d_y^beta R| |x - ybar|^n`` over a grid of pairs."""

    sup: float
    rows: list

    def to_csv(self):
        lines = ["x,y,alpha,beta,value,product_with_power"]
        for x, y, a, b, v, p in self.rows:
            lines.append(
                ",".join(
                    [
                        " ".join(f"{t:.6g}" for t in x),
                        " ".join(f"{t:.6g}" for t in y),
                        mi.key(a),
                        mi.key(b),
                        f"{v:.10g}",
                        f"{p:.10g}",
                    ]
                )
            )
        return "\n".join(lines) + "\n"


def fd_step(x, y):
    """``h = min(x_n, y_n, |x - y|) / 20``; ``|x - y|`` is skipped on the diagonal."""
    d = float(np.linalg.norm(np.asarray(x) - np.asarray(y)))
    cands = [x[-1], y[-1]] + ([d] if d > 0 else [])
    return min(cands) / 20.0


def residual_derivative(op, x, y, alpha, beta, h=None, check=True):
    """FD value of ``d_x^alpha d_y^beta R(x, y)`` with a Richardson cross-check.

    Raises :class:`NumericError` when the value changes by more than 50%
    under step halving.  Changes below ``1e-3 |x - ybar|^{-n}`` (the natural
    scale of the decay bound) count as stable, so vanishing derivatives do
    not trip the check.
    """
    h = fd_step(x, y) if h is None else h
    f = lambda X, Y: residual(op, X, Y)
    with np.errstate(divide="ignore", invalid="ignore"):
        v1 = mixed_derivative(f, x, y, alpha, beta, h)
        v2 = mixed_derivative(f, x, y, alpha, beta, h / 2) if check else v1
    if not (np.isfinite(v1) and np.isfinite(v2)):
        raise NumericError("finite-difference stencil reached the reflected singularity")
    if not check:
        return v1
    floor = 1e-3 / float(np.linalg.norm(np.asarray(x) - _reflect(y))) ** op.n
    if abs(v1 - v2) > 0.5 * max(abs(v1), abs(v2)) + floor:
        raise NumericError("finite-difference residual derivative unstable under halving")
    return (4 * v2 - v1) / 3


def residual_decay_check(op, xs, ys, orders=None, check=True):
    """Sup over pairs and over ``|alpha| = |beta| = m`` of ``|d R| |x - ybar|^n``."""
    m, n = op.m, op.n
    orders = orders or [(a, b) for a in mi.of_order(n, m) for b in mi.of_order(n, m)]
    rows = []
    sup = 0.0
    for x in xs:
        for y in ys:
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            rho = float(np.linalg.norm(x - _reflect(y)))
            for a, b in orders:
                v = residual_derivative(op, x, y, a, b, check=check)
                prod = abs(v) * rho**n
                rows.append((x, y, a, b, v, prod))
                sup = max(sup, prod)
    return ResidualReport(sup, rows)
