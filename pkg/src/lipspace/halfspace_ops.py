"""Integral operators on the weighted half-space ``L_p(R^n_+, x_n^{ap} dx)``.

Two discretizations are provided.

* On the half-line (n = 1) every kernel that is homogeneous of degree -1,
  ``k(x, y) = x^{-1} k1(y / x)``, becomes a convolution after ``x = e^u``:
  with ``c = a + 1/p = 1 - s`` the map ``f -> e^{cu} f(e^u)`` is an isometry
  onto ``L_p(du)`` and the operator turns into convolution with
  ``kappa(w) = e^{(c-1) w} k1(e^{-w})``.  A uniform grid in ``u`` gives a
  Toeplitz matrix whose ``l_p`` norm converges to ``int kappa`` for positive
  kernels.
* In n >= 2 dimensions the truncated half-space ``[0, L]^{n-1} x (0, H]`` is
  sampled at cell centres, periodic in ``x'``, and kernels are summed
  directly.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.linalg import matmul_toeplitz, toeplitz
from scipy.sparse.linalg import LinearOperator

from .errors import KernelError, NumericError, ParameterError
from .spaces import SpaceParams

# ---------------------------------------------------------------------------
# one-dimensional profiles  k1(t) = x k(x, t x)
# ---------------------------------------------------------------------------


def k1_reflect(t):
    """``K``: ``1 / (x + y)``."""
    return 1.0 / (1.0 + t)


def k1_log(t):
    """``R``: ``log(|x - y| / x + 2) / (x + y)``."""
    return np.log(np.abs(1.0 - t) + 2.0) / (1.0 + t)


def k1_log_commutator(t):
    """``T`` with symbol ``b = log x``: ``|log x - log y| / (x + y)``."""
    return np.abs(np.log(t)) / (1.0 + t)


PROFILES = {"K": k1_reflect, "R": k1_log, "T_log": k1_log_commutator}


def profile_from_dilation(q):
    """1-D profile of ``Qf(x) = x^{-1} int q((y - x)/x) f(y) dy``."""
    return lambda t: q(t - 1.0)


# ---------------------------------------------------------------------------
# log-grid discretization on the half-line
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogGrid:
    """Uniform grid in ``u = log x`` on ``[-T, T]`` with spacing ``du``."""

    T: float = 100.0
    du: float = 0.1

    @property
    def u(self):
        n = int(round(2 * self.T / self.du))
        return -self.T + (np.arange(n) + 0.5) * (2 * self.T / n)

    @property
    def step(self):
        return 2 * self.T / self.u.size

    @property
    def x(self):
        return np.exp(self.u)

    def refine(self):
        return LogGrid(self.T * 1.5, self.du / 2)


def log_kernel(profile, s):
    """Convolution kernel ``kappa(w) = e^{(c-1) w} k1(e^{-w})`` with ``c = 1 - s``."""
    c = 1.0 - s

    def kappa(w):
        w = np.asarray(w, dtype=float)
        return np.exp((c - 1.0) * w) * profile(np.exp(-w))

    return kappa


def log_matrix(profile, s, grid, dense=False):
    """Toeplitz operator of the kernel in ``L_p(du)`` coordinates.

    Returned as a :class:`~scipy.sparse.linalg.LinearOperator` with FFT
    products, or as a dense array when ``dense`` is set.
    """
    u = grid.u
    kappa = log_kernel(profile, s)
    col = kappa(u - u[0]) * grid.step
    row = kappa(u[0] - u) * grid.step
    if dense:
        return toeplitz(col, row)
    return LinearOperator(
        (u.size, u.size),
        matvec=lambda v: matmul_toeplitz((col, row), v),
        rmatvec=lambda v: matmul_toeplitz((row, col), v),
        dtype=float,
    )


def exact_log_norm(profile, s):
    """``int_0^inf k1(t) t^{s-1} dt``, the norm of a positive homogeneous kernel (any p)."""
    f = lambda t: profile(t) * t ** (s - 1.0)
    total = 0.0
    for a, b in [(0.0, 1.0), (1.0, 2.0), (2.0, np.inf)]:
        total += integrate.quad(f, a, b, limit=400, epsabs=1e-13, epsrel=1e-11)[0]
    return total


def hardy_littlewood_polya(s):
    """``pi / sin(pi s)``: norm of ``K`` on ``L_p(x^{ap})`` over the half-line."""
    return math.pi / math.sin(math.pi * s)


# ---------------------------------------------------------------------------
# norm estimation
# ---------------------------------------------------------------------------


def _is_operator(A):
    return isinstance(A, LinearOperator)


def lp_matrix_norm(A, p, iters=2000, tol=1e-10, nonnegative=None):
    """``l_p -> l_p`` norm of a non-negative matrix by Boyd's power method.

    For ``p = 2`` this is the power method on ``A^T A`` and returns the
    dominant singular value.  The iterates increase monotonically to the norm
    for positive matrices, so the result is a lower bound at any stage.
    ``A`` may be a dense array or a ``LinearOperator`` (assumed non-negative
    unless ``nonnegative=False``).
    """
    if not p > 1:
        raise ParameterError("need p > 1")
    if not _is_operator(A):
        A = np.asarray(A, dtype=float)
        if np.all(A == 0):
            return 0.0
        if nonnegative is None:
            nonnegative = not np.any(A < 0)
        if not nonnegative:
            if p != 2:
                raise ParameterError("signed matrices are supported only for p = 2")
            return float(np.linalg.norm(A, 2))
        mv, rmv = (lambda v: A @ v), (lambda v: A.T @ v)
    else:
        if nonnegative is False:
            raise ParameterError("signed operators need a dense matrix")
        mv, rmv = A.matvec, A.rmatvec
    q = p / (p - 1.0)
    x = np.ones(A.shape[1])
    x /= np.linalg.norm(x, p)
    val = 0.0
    for _ in range(iters):
        y = np.maximum(mv(x), 0.0)
        new = float(np.linalg.norm(y, p))
        if new == 0:
            return 0.0
        z = np.maximum(rmv(y ** (p - 1)), 0.0)
        x = z ** (q - 1)
        x /= np.linalg.norm(x, p)
        if abs(new - val) <= tol * new:
            return new
        val = new
    return val


@dataclass
class NormEstimate:
    """Lower bounds of an operator norm.

    ``random_max`` is the best ratio over random smooth test functions;
    ``power`` the value reached by power iteration on the matrix.
    """

    random_max: float
    power: float
    trials: int

    @property
    def value(self):
        return max(self.random_max, self.power)


def _random_profiles(u, trials, rng):
    for _ in range(trials):
        k = rng.integers(1, 5)
        f = np.zeros_like(u)
        span = u[-1] - u[0]
        for _ in range(k):
            c = rng.uniform(u[0] + 0.2 * span, u[-1] - 0.2 * span)
            w = rng.uniform(0.5, 0.2 * span)
            f += rng.normal() * np.exp(-0.5 * ((u - c) / w) ** 2)
        yield f


def estimate_norm(A, p, trials=20, seed=0, power=True, weights=None):
    """Randomized and power-iteration lower bounds of ``||A||_{l_p(weights)}``.

    ``weights`` (default 1) are the measure of each node: the norm is that of
    ``D A D^{-1}`` with ``D = diag(weights^{1/p})`` in plain ``l_p``.
    Test functions with zero norm are skipped.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    if _is_operator(A):
        if weights is not None:
            raise ParameterError("weights need a dense matrix")
        B, apply = A, A.matvec
    else:
        A = np.asarray(A, dtype=float)
        w = np.ones(A.shape[1]) if weights is None else np.asarray(weights, dtype=float)
        d = w ** (1.0 / p)
        B = d[:, None] * A / d[None, :]
        apply = lambda v: B @ v
    rng = np.random.default_rng(seed)
    u = np.arange(B.shape[1], dtype=float)
    best = 0.0
    done = 0
    for f in _random_profiles(u, trials, rng):
        nf = np.linalg.norm(f, p)
        if nf == 0:
            continue
        best = max(best, float(np.linalg.norm(apply(f), p) / nf))
        done += 1
    pw = lp_matrix_norm(B, p) if power else 0.0
    return NormEstimate(best, pw, done)


def log_operator_norm(profile, s, p, grid=None, trials=10, seed=0):
    """Norm estimate of a homogeneous half-line operator on the log grid."""
    grid = grid or LogGrid()
    A = log_matrix(profile, s, grid)
    return estimate_norm(A, p, trials=trials, seed=seed)


def blowup_sweep(kind, s_list, p_list, grid=None, trials=4, seed=0):
    """Rows ``(s, p, empirical_norm, bound_shape, ratio)`` with ``bound_shape = 1/(s(1-s))``."""
    profile = PROFILES[kind] if isinstance(kind, str) else kind
    rows = []
    for p in p_list:
        for s in s_list:
            SpaceParams(p, s=s)
            est = log_operator_norm(profile, s, p, grid, trials, seed).value
            bound = 1.0 / (s * (1.0 - s))
            rows.append((s, p, est, bound, est / bound))
    return rows


# ---------------------------------------------------------------------------
# dilation operators
# ---------------------------------------------------------------------------


def dilation_bound(q, params, n=1):
    """``int_{R^n_+} Q(zeta', zeta_n - 1) zeta_n^{-a-1/p} dzeta``.

    ``q`` takes an array of shape (..., n).  Divergence raises
    :class:`ParameterError`.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            return _dilation_bound(q, params, n)
        except integrate.IntegrationWarning as exc:
            raise ParameterError(f"dilation bound integral does not converge: {exc}") from None


def _dilation_bound(q, params, n):
    e = -params.a - 1.0 / params.p
    if n == 1:
        f = lambda t: q(np.array([[t - 1.0]]))[0] * t**e
        parts = [(0, 1), (1, 2), (2, np.inf)]
        total = 0.0
        for lo, hi in parts:
            val, err = integrate.quad(f, lo, hi, limit=400, epsabs=1e-12, epsrel=1e-10)
            total += val
            if not np.isfinite(val) or err > 1e-4 * max(1.0, abs(val)):
                raise ParameterError("dilation bound integral does not converge")
        return total
    if n == 2:
        def inner(t):
            g = lambda z: q(np.array([[z, t - 1.0]]))[0]
            v1, _ = integrate.quad(g, -np.inf, 0, limit=200)
            v2, _ = integrate.quad(g, 0, np.inf, limit=200)
            return (v1 + v2) * t**e

        total = 0.0
        for lo, hi in [(0, 1), (1, 2), (2, np.inf)]:
            val, err = integrate.quad(inner, lo, hi, limit=200, epsrel=1e-8)
            total += val
            if not np.isfinite(val) or err > 1e-3 * max(1.0, abs(val)):
                raise ParameterError("dilation bound integral does not converge")
        return total
    raise ParameterError("dilation bounds are implemented for n in {1, 2}")


# ---------------------------------------------------------------------------
# grid operators in n >= 1
# ---------------------------------------------------------------------------


@dataclass
class HalfSpaceGrid:
    """Cell-centred sampling of ``[0, L]^{n-1} x (0, H]``, periodic in ``x'``."""

    n: int = 2
    L: float = 1.0
    H: float = 1.0
    N: int = 32
    M: int = 32
    period: bool = True
    points: np.ndarray = field(init=False, repr=False)
    volumes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        hx = self.L / self.N
        hn = self.H / self.M
        axes = [(np.arange(self.N) + 0.5) * hx] * (self.n - 1) + [(np.arange(self.M) + 0.5) * hn]
        P = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.n)
        self.points = P
        self.volumes = np.full(P.shape[0], hx ** (self.n - 1) * hn)

    @property
    def xn(self):
        return self.points[:, -1]

    def displacement(self, X, Y):
        """``X - Y`` with the nearest periodic image in ``x'``."""
        d = X[:, None, :] - Y[None, :, :]
        if self.period and self.n > 1:
            d[..., :-1] -= self.L * np.round(d[..., :-1] / self.L)
        return d

    def refine(self):
        return HalfSpaceGrid(self.n, self.L, self.H, 2 * self.N, 2 * self.M, self.period)

    def weighted_norm(self, f, params):
        f = np.asarray(f, dtype=float)
        return float(np.sum(np.abs(f) ** params.p * self.xn ** (params.a * params.p) * self.volumes) ** (1 / params.p))


def _reflect_distance(grid, X, Y):
    d = grid.displacement(X, Y)
    d[..., -1] = X[:, None, -1] + Y[None, :, -1]
    return np.linalg.norm(d, axis=-1)


def kernel_matrix(kind, grid, b=None, q=None):
    """Dense matrix ``A_ij = k(x_i, y_j) vol_j`` of a positive half-space kernel."""
    X = grid.points
    n = grid.n
    if kind == "Q":
        if q is None:
            raise ParameterError("dilation kernel needs a profile q")
        d = -grid.displacement(X, X)
        z = d / X[:, None, -1:]
        k = q(z) / X[:, None, -1] ** n
    else:
        r_bar = _reflect_distance(grid, X, X)
        k = 1.0 / r_bar**n
        if kind == "R":
            r = np.linalg.norm(grid.displacement(X, X), axis=-1)
            k = k * np.log(r / X[:, None, -1] + 2.0)
        elif kind == "T":
            if b is None:
                raise ParameterError("commutator kernel needs a symbol b")
            b = np.asarray(b, dtype=float)
            k = k * np.abs(b[:, None] - b[None, :])
        elif kind != "K":
            raise ParameterError(f"unknown kernel kind {kind!r}")
    return k * grid.volumes[None, :]


def apply_dilation(q, f, grid):
    """``Qf(x) = x_n^{-n} int Q((y - x)/x_n) f(y) dy`` on a half-space grid."""
    return kernel_matrix("Q", grid, q=q) @ np.asarray(f, dtype=float)


def apply_reflect_K(f, grid):
    """``Kf(x) = int f(y) / |x - ybar|^n dy``."""
    return kernel_matrix("K", grid) @ np.asarray(f, dtype=float)


def apply_log_R(f, grid):
    """``Rf(x) = int log(|x - y| / x_n + 2) f(y) / |x - ybar|^n dy``."""
    return kernel_matrix("R", grid) @ np.asarray(f, dtype=float)


def apply_commutator_T(b, f, grid):
    """``Tf(x) = int |b(x) - b(y)| f(y) / |x - ybar|^n dy``."""
    return kernel_matrix("T", grid, b=b) @ np.asarray(f, dtype=float)


def half_line_operator(profile, f, x, support=(0.0, np.inf), points=None):
    """``int k(x, y) f(y) dy`` on the half-line by adaptive quadrature."""
    out = []
    for xi in np.atleast_1d(x):
        g = lambda y: profile(y / xi) / xi * f(y)
        brk = [p for p in ([xi] + list(points or [])) if support[0] < p < support[1]]
        edges = [support[0]] + sorted(brk) + [support[1]]
        val = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            val += integrate.quad(g, lo, hi, limit=400, epsabs=1e-13, epsrel=1e-11)[0]
        out.append(val)
    return np.array(out)


def grid_operator_norm(kind, grid, params, b=None, q=None, trials=10, seed=0):
    """Norm estimate on ``L_p(x_n^{ap})`` for a grid kernel."""
    A = kernel_matrix(kind, grid, b=b, q=q)
    w = grid.xn ** (params.a * params.p) * grid.volumes
    return estimate_norm(A, params.p, trials=trials, seed=seed, weights=w)


# ---------------------------------------------------------------------------
# Calderon-Zygmund operators
# ---------------------------------------------------------------------------


def riesz_kernel(j=0):
    """``k(z) = z_j / |z|^{n+1}`` (odd, homogeneous of degree -n)."""

    def k(z):
        z = np.asarray(z, dtype=float)
        n = z.shape[-1]
        r = np.linalg.norm(z, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r > 0, z[..., j] / r ** (n + 1), 0.0)

    return k


def hilbert_kernel(z):
    """``1 / (pi z)`` on the line."""
    z = np.asarray(z, dtype=float)[..., 0]
    with np.errstate(divide="ignore"):
        return np.where(z != 0, 1.0 / (np.pi * z), 0.0)


@dataclass
class KernelCheck:
    homogeneity_error: float
    mean_value: float


def check_cz_kernel(k, n, tol=1e-8, samples=16, seed=0):
    """Homogeneity ``k(lz) = l^{-n} k(z)`` and vanishing spherical mean.

    Raises :class:`KernelError` when the spherical mean exceeds ``tol``.
    """
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(samples, n))
    hom = 0.0
    for lam in (0.5, 2.0, 10.0):
        a = k(lam * z)
        b = lam ** (-n) * k(z)
        hom = max(hom, float(np.max(np.abs(a - b) / np.maximum(1e-300, np.abs(b) + 1e-300))))
    if n == 1:
        mean = float(k(np.array([[1.0]]))[0] + k(np.array([[-1.0]]))[0])
    elif n == 2:
        mean = integrate.quad(lambda t: float(k(np.array([[np.cos(t), np.sin(t)]]))[0]), 0, 2 * np.pi, epsabs=1e-13)[0]
    else:
        th, w = np.polynomial.legendre.leggauss(48)
        ph = 2 * np.pi * (np.arange(96) + 0.5) / 96
        ct = th
        st = np.sqrt(1 - ct**2)
        Z = np.stack(
            [st[:, None] * np.cos(ph)[None], st[:, None] * np.sin(ph)[None], np.repeat(ct[:, None], 96, 1)], -1
        )
        mean = float(np.sum(k(Z) * w[:, None]) * (2 * np.pi / 96))
    if abs(mean) > tol:
        raise KernelError(f"kernel has nonzero spherical mean {mean:.3e}")
    return KernelCheck(hom, mean)


def layer_weights(xn_x, xn_y):
    """Weight of the near-diagonal layer part ``(1/4) sum_{|j-k|<=3} chi_j (.) chi_k``.

    ``chi_j`` is the indicator of ``2^{j-1} < x_n < 2^{j+1}``, so every point
    lies in exactly two layers and ``sum_j chi_j = 2``.
    """
    jx = np.floor(np.log2(xn_x))
    jy = np.floor(np.log2(xn_y))
    # point with floor(log2 x_n) = i lies in layers i and i + 1
    count = np.zeros(np.broadcast(jx[:, None], jy[None, :]).shape)
    for a in (0, 1):
        for b in (0, 1):
            count += np.abs((jx[:, None] + a) - (jy[None, :] + b)) <= 3
    return count / 4.0


def apply_czo(k, f, points, volumes, b=None, r_excl=None, period=None, near_part=False):
    """Principal-value Calderon-Zygmund operator by symmetric exclusion.

    Pairs closer than ``r_excl`` (default: one cell diagonal) are dropped; on
    a symmetric stencil the odd kernel then cancels exactly.  With a symbol
    ``b`` the commutator ``S(b f) - b S f`` is returned.  ``near_part``
    restricts the kernel to the near-diagonal layer part.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    vol = np.asarray(volumes, dtype=float)
    if r_excl is None:
        r_excl = float(np.sqrt(P.shape[1]) * np.max(vol) ** (1.0 / P.shape[1]))
    d = P[:, None, :] - P[None, :, :]
    if period is not None:
        per = np.asarray(period, dtype=float)
        for ax in range(P.shape[1]):
            if per[ax] > 0:
                d[..., ax] -= per[ax] * np.round(d[..., ax] / per[ax])
    r = np.linalg.norm(d, axis=-1)
    K = np.where(r >= r_excl * (1 - 1e-12), k(d), 0.0) * vol[None, :]
    if near_part:
        K = K * layer_weights(P[:, -1], P[:, -1])
    f = np.asarray(f, dtype=float)
    if b is None:
        return K @ f
    b = np.asarray(b, dtype=float)
    return K @ (b * f) - b * (K @ f)


def hilbert_indicator(x, lo, hi):
    """Closed form ``(1/pi) log|(x - lo)/(x - hi)|`` of the Hilbert kernel on an indicator."""
    x = np.asarray(x, dtype=float)
    return np.log(np.abs((x - lo) / (x - hi))) / np.pi


# ---------------------------------------------------------------------------
# parameter-integral lemma
# ---------------------------------------------------------------------------


@dataclass
class Lemma1Result:
    lhs: float
    ratio: float
    error: float


def lemma1_integral(N, eps, delta, a, b, zeta, epsrel=1e-10):
    """``int_{R^N} d eta / ((|eta|+a)^{N+eps} (|eta-zeta|+b)^{N-delta})``."""
    if not (0 < delta < N and eps > 0 and a > 0 and b >= 0):
        raise ParameterError("need 0 < delta < N, eps > 0, a > 0, b >= 0")
    z = float(np.linalg.norm(np.atleast_1d(zeta)))
    pa, pb = N + eps, N - delta
    if N == 1:
        f = lambda t: 1.0 / ((abs(t) + a) ** pa * (abs(t - z) + b) ** pb)
        pts = sorted(set([0.0, z, -a, a, z - b, z + b]))
        edges = [-np.inf] + pts + [np.inf]
        total, err = 0.0, 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            if hi > lo:
                v, e = integrate.quad(f, lo, hi, limit=500, epsabs=0, epsrel=epsrel)
                total += v
                err += e
        return total, err
    if N == 2:
        # polar coordinates around the origin, zeta on the first axis
        def inner(r):
            g = lambda th: 1.0 / ((r + a) ** pa * (np.sqrt(r * r + z * z - 2 * r * z * np.cos(th)) + b) ** pb)
            pts = None
            if z > 0 and abs(r - z) < 4 * (b + a) + 0.5 * z:
                w = min(np.pi, (b + abs(r - z) + 1e-12) / max(r, 1e-300))
                pts = [w] if w < np.pi else None
            v, _ = integrate.quad(g, 0.0, np.pi, points=pts, limit=500, epsabs=0, epsrel=epsrel)
            return 2.0 * v * r

        brk = sorted(set(p for p in [a, z - b, z, z + b, 2 * z + a + b] if p > 0))
        edges = [0.0] + brk + [np.inf]
        total, err = 0.0, 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            if hi > lo:
                v, e = integrate.quad(inner, lo, hi, limit=500, epsabs=0, epsrel=epsrel)
                total += v
                err += e
        return total, err
    raise ParameterError("N must be 1 or 2")


def lemma1_verify(N, eps, delta, a_list, b_list, zeta_list, epsrel=1e-10):
    """Empirical constant ``max LHS a^eps (|zeta|+a+b)^{N-delta}`` over a sweep."""
    best = None
    for a in a_list:
        for b in b_list:
            for z in zeta_list:
                lhs, err = lemma1_integral(N, eps, delta, a, b, z, epsrel)
                if not np.isfinite(lhs):
                    raise NumericError("parameter integral did not converge")
                ratio = lhs * a**eps * (abs(z) + a + b) ** (N - delta)
                if best is None or ratio > best.ratio:
                    best = Lemma1Result(lhs, ratio, err)
    return best


# ---------------------------------------------------------------------------
# operator wrapper
# ---------------------------------------------------------------------------

KINDS = ("Q", "K", "R", "T", "S", "S_comm")


@dataclass
class KernelOperator:
    """An operator of one of the kinds in :data:`KINDS` on a discretization grid.

    ``grid`` is a :class:`LogGrid` (half-line, homogeneous kernels only) or a
    :class:`HalfSpaceGrid`.  ``q`` is the dilation profile, ``b`` the symbol
    sampled on the grid (for ``T`` on a log grid only ``b = log x`` is
    available and ``b`` is ignored), ``k`` the Calderon-Zygmund kernel.
    """

    kind: str
    grid: object
    q: object = None
    b: object = None
    k: object = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown operator kind {self.kind!r}")
        if self.kind in ("S", "S_comm"):
            if self.k is None:
                raise ParameterError("czo operators need a kernel k")
            check_cz_kernel(self.k, self.grid.n)
        if self.kind in ("S", "S_comm") and isinstance(self.grid, LogGrid):
            raise ParameterError("czo operators need a HalfSpaceGrid")

    def _profile(self):
        if self.kind == "Q":
            return lambda t: self.q(np.asarray(t, dtype=float)[..., None] - 1.0)
        return {"K": k1_reflect, "R": k1_log, "T": k1_log_commutator}[self.kind]

    def matrix(self, params):
        """Kernel matrix in the grid's natural coordinates."""
        if isinstance(self.grid, LogGrid):
            return log_matrix(self._profile(), params.s, self.grid)
        if self.kind in ("S", "S_comm"):
            g = self.grid
            n = g.points.shape[0]
            per = [g.L] * (g.n - 1) + [0.0] if g.period else None
            eye = np.eye(n)
            K = apply_czo(self.k, eye, g.points, g.volumes, period=per)
            if self.kind == "S_comm":
                b = np.asarray(self.b, dtype=float)
                K = K * (b[None, :] - b[:, None])
            return K
        return kernel_matrix(self.kind, self.grid, b=self.b, q=self.q)

    def apply(self, f, params=None):
        """Apply to samples ``f`` at the grid nodes (original, unweighted variables)."""
        f = np.asarray(f, dtype=float)
        if isinstance(self.grid, LogGrid):
            c = 1.0 - params.s
            x = self.grid.x
            return self.matrix(params).matvec(f * x**c) / x**c
        return self.matrix(params) @ f

    def norm(self, params, trials=10, seed=0):
        """:func:`estimate_norm` in ``L_p(x_n^{ap})``."""
        A = self.matrix(params)
        if isinstance(self.grid, LogGrid):
            return estimate_norm(A, params.p, trials, seed)
        g = self.grid
        w = g.xn ** (params.a * params.p) * g.volumes
        signed = self.kind in ("S", "S_comm")
        if signed and params.p != 2:
            return estimate_norm(A, params.p, trials, seed, power=False, weights=w)
        return estimate_norm(A, params.p, trials, seed, weights=w)
