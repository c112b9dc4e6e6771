"""Weighted Sobolev, Besov and Whitney-Besov norms.

Grid functions are sampled at cell centres of a box covering the domain, with
``margin`` ghost layers on every side so that central differences are
available at every interior cell.  Integrals are midpoint sums over the cells
whose centres lie in the domain, weighted by powers of the distance to the
boundary.
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import multiindex as mi
from .errors import DegenerateInputError, MultiIndexError, ParameterError, ResolutionError
from .geometry import GraphDomain, PolygonDomain


class HardyWeightWarning(UserWarning):
    """A V-norm was requested for data that does not vanish near the boundary."""


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpaceParams:
    """Integrability ``p``, weight exponent ``a`` and order ``m``.

    Exactly one of ``a`` and ``s`` is given; the other follows from
    ``s = 1 - a - 1/p``.  The constructor enforces ``0 < s < 1``.
    """

    p: float
    a: float = None
    m: int = 1
    s: float = None

    def __post_init__(self):
        p = float(self.p)
        if not p > 1 or not np.isfinite(p):
            raise ParameterError("p must lie in (1, inf)")
        if (self.a is None) == (self.s is None):
            raise ParameterError("give exactly one of a and s")
        if self.a is None:
            a = 1.0 - float(self.s) - 1.0 / p
        else:
            a = float(self.a)
        s = 1.0 - a - 1.0 / p
        if not 0 < s < 1:
            raise ParameterError(f"need -1/p < a < 1 - 1/p (got s = {s:.6g})")
        if int(self.m) < 1:
            raise ParameterError("order m must be >= 1")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "m", int(self.m))

    @property
    def p_conj(self):
        return self.p / (self.p - 1.0)

    def with_m(self, m):
        return SpaceParams(self.p, a=self.a, m=m)

    def to_dict(self):
        return {"p": self.p, "a": self.a, "s": self.s, "m": self.m}


# ---------------------------------------------------------------------------
# grid functions
# ---------------------------------------------------------------------------


def _d1(arr, axis, h):
    out = np.full_like(arr, np.nan)
    sl = [slice(None)] * arr.ndim
    lo, mid, hi = list(sl), list(sl), list(sl)
    lo[axis], mid[axis], hi[axis] = slice(None, -2), slice(1, -1), slice(2, None)
    out[tuple(mid)] = (arr[tuple(hi)] - arr[tuple(lo)]) / (2 * h)
    return out


def _d2(arr, axis, h):
    out = np.full_like(arr, np.nan)
    sl = [slice(None)] * arr.ndim
    lo, mid, hi = list(sl), list(sl), list(sl)
    lo[axis], mid[axis], hi[axis] = slice(None, -2), slice(1, -1), slice(2, None)
    out[tuple(mid)] = (arr[tuple(hi)] - 2 * arr[tuple(mid)] + arr[tuple(lo)]) / h**2
    return out


def box_for(domain, h, pad=0.0):
    """Lower corner and cell counts of a cell-centred box covering ``domain``."""
    if isinstance(domain, GraphDomain):
        lo = np.zeros(domain.n)
        hi = np.full(domain.n, domain.L)
        lo[-1] = min(0.0, float(domain.phi_grid.min()))
        hi[-1] = domain.H
    elif isinstance(domain, PolygonDomain):
        lo, hi = domain.bbox
    else:
        raise ParameterError("unsupported domain type")
    lo = np.asarray(lo, dtype=float) - pad
    hi = np.asarray(hi, dtype=float) + pad
    h = np.broadcast_to(np.asarray(h, dtype=float), lo.shape).copy()
    counts = np.maximum(np.round((hi - lo) / h).astype(int), 1)
    h = (hi - lo) / counts
    return lo, h, counts


@dataclass
class GridFunction:
    """Cell-centred samples of an ``l``-component field.

    ``values`` has shape ``(l, *shape)`` where ``shape`` includes ``margin``
    ghost layers on each side; ``origin`` is the centre of the first
    non-ghost cell.  ``mask`` and ``rho`` refer to the non-ghost cells.
    """

    values: np.ndarray
    origin: np.ndarray
    h: np.ndarray
    margin: int
    mask: np.ndarray
    rho: np.ndarray
    meta: dict = field(default_factory=dict)
    full_mask: np.ndarray = None

    def __post_init__(self):
        if self.full_mask is None:
            self.full_mask = np.pad(self.mask, self.margin, constant_values=False)

    @property
    def ncomp(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.ndim - 1

    @property
    def shape(self):
        return tuple(s - 2 * self.margin for s in self.values.shape[1:])

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    def _core(self, arr):
        m = self.margin
        return arr[(slice(None),) + (slice(m, -m if m else None),) * self.dim]

    def coords(self):
        axes = [self.origin[k] + self.h[k] * np.arange(self.shape[k]) for k in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def interior_values(self):
        return self._core(self.values)

    @classmethod
    def from_callable(cls, func, domain, h, margin=2, ncomp=None, rho=None, pad=0.0):
        """Sample ``func(X)`` (X of shape (..., n)) on a box covering ``domain``.

        ``func`` returns an array of shape ``X.shape[:-1]`` (scalar field) or
        ``(l,) + X.shape[:-1]``.  Ghost layers are evaluated too, so ``func``
        must be defined slightly outside the domain; NaN there makes the
        affected derivatives NaN, which is reported as a resolution error.
        """
        lo, hh, counts = box_for(domain, h, pad)
        n = lo.size
        axes = [lo[k] + hh[k] * (np.arange(-margin, counts[k] + margin) + 0.5) for k in range(n)]
        X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        vals = np.asarray(func(X), dtype=float)
        if vals.shape == X.shape[:-1]:
            vals = vals[None]
        full_mask = domain.contains(X.reshape(-1, n)).reshape(X.shape[:-1])
        inner = X[(slice(margin, -margin if margin else None),) * n]
        pts = inner.reshape(-1, n)
        mask = full_mask[(slice(margin, -margin if margin else None),) * n]
        if rho is None:
            dist = np.zeros(pts.shape[0])
            dist[mask.ravel()] = domain.distance(pts[mask.ravel()])
            rho = dist.reshape(mask.shape)
        return cls(
            values=vals,
            origin=lo + 0.5 * hh,
            h=hh,
            margin=margin,
            mask=mask,
            rho=np.asarray(rho, dtype=float),
            meta={"domain": type(domain).__name__},
            full_mask=full_mask,
        )

    @classmethod
    def half_space(cls, func, L=1.0, H=1.0, h=1 / 64, n=2, margin=2):
        """Samples on ``[0, L]^{n-1} x (0, H]`` with weight distance ``x_n``."""
        dom = GraphDomain.flat(n=n, N=max(1, int(round(L / (np.atleast_1d(h)[0])))), L=L, H=H)
        lo, hh, counts = box_for(dom, h)
        axes = [lo[k] + hh[k] * (np.arange(counts[k]) + 0.5) for k in range(n)]
        xn = np.meshgrid(*axes, indexing="ij")[-1]
        return cls.from_callable(func, dom, h, margin=margin, rho=xn)

    def with_values(self, values):
        return GridFunction(
            np.asarray(values, dtype=float), self.origin, self.h, self.margin, self.mask, self.rho, dict(self.meta), self.full_mask
        )

    def derivative(self, beta, full=False):
        """Central-difference ``D^beta`` on the non-ghost cells, shape ``(l, *shape)``.

        Order ``k`` along an axis uses ``k // 2`` second differences and
        ``k % 2`` first differences.  With ``full=True`` the ghost layers are
        kept (NaN where the stencil leaves the sampled box).
        """
        beta = tuple(int(b) for b in beta)
        if len(beta) != self.dim:
            raise MultiIndexError("multi-index length must equal the dimension")
        arr = self.values
        for axis, k in enumerate(beta):
            need = k // 2 + k % 2
            if need > self.margin:
                raise ResolutionError(f"margin {self.margin} is too small for order {k} differences")
            for _ in range(k // 2):
                arr = _d2(arr, axis + 1, self.h[axis])
            if k % 2:
                arr = _d1(arr, axis + 1, self.h[axis])
        return arr if full else self._core(arr)

    def _check_finite(self, arr):
        sel = arr[:, self.mask]
        if not np.all(np.isfinite(sel)):
            raise ResolutionError("derivative stencil reaches undefined samples inside the domain")
        return sel

    def integrate(self, density):
        """Midpoint sum of a non-negative density over the domain cells."""
        return float(np.sum(density[self.mask]) * self.cell_volume)

    # -- serialization -------------------------------------------------------
    def header(self):
        return {
            "shape": list(self.values.shape),
            "spacing": [float(x) for x in self.h],
            "origin": [float(x) for x in self.origin],
            "margin": self.margin,
            "components": self.ncomp,
            "dtype": "float64",
        }

    def dump(self, prefix):
        with open(prefix + ".json", "w") as fh:
            json.dump(self.header(), fh)
        with open(prefix + ".bin", "wb") as fh:
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.mask, dtype=np.uint8).tobytes())
            fh.write(np.ascontiguousarray(self.rho, dtype="<f8").tobytes())

    @classmethod
    def load(cls, prefix):
        with open(prefix + ".json") as fh:
            hd = json.load(fh)
        raw = open(prefix + ".bin", "rb").read()
        shape = tuple(hd["shape"])
        nv = int(np.prod(shape)) * 8
        vals = np.frombuffer(raw[:nv], dtype="<f8").reshape(shape)
        m = hd["margin"]
        core = tuple(s - 2 * m for s in shape[1:])
        nm = int(np.prod(core))
        mask = np.frombuffer(raw[nv : nv + nm], dtype=np.uint8).reshape(core).astype(bool)
        rho = np.frombuffer(raw[nv + nm :], dtype="<f8").reshape(core)
        return cls(vals.copy(), np.array(hd["origin"]), np.array(hd["spacing"]), m, mask, rho.copy())


def _pointwise_norm(arr):
    return np.sqrt(np.sum(arr * arr, axis=0))


# ---------------------------------------------------------------------------
# weighted Lebesgue and Sobolev norms
# ---------------------------------------------------------------------------


def _weighted_sum(u, field_, p, power):
    """``sum |field|^p rho^power dV`` over domain cells (power may be negative)."""
    mag = _pointwise_norm(field_)
    rho = np.where(u.mask, u.rho, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.where(u.mask, mag**p * rho**power, 0.0)
    return u.integrate(dens)


def weighted_lp_norm(u, params, values=None):
    """``(int |u|^p rho^{a p} dX)^{1/p}`` by the midpoint rule."""
    v = u.interior_values() if values is None else values
    return _weighted_sum(u, v, params.p, params.a * params.p) ** (1.0 / params.p)


def _boundary_flag(u, width=2.0):
    near = u.mask & (u.rho < width * np.max(u.h))
    vals = u.interior_values()[:, near]
    return bool(vals.size and np.max(np.abs(vals)) > 0)


def v_norm(u, params, warn=True):
    """Hardy-weighted norm ``(sum_{|b|<=m} int |rho^{|b|-m} D^b u|^p rho^{ap})^{1/p}``.

    A :class:`HardyWeightWarning` is issued when ``u`` does not vanish in the
    strip of width ``2h`` along the boundary.
    """
    if warn and _boundary_flag(u):
        warnings.warn("data does not vanish near the boundary; Hardy weights may be inaccurate", HardyWeightWarning)
    p, a, m = params.p, params.a, params.m
    total = 0.0
    for beta in mi.up_to(u.dim, m):
        d = u.derivative(beta)
        u._check_finite(d)
        total += _weighted_sum(u, d, p, p * (a + sum(beta) - m))
    return total ** (1.0 / p)


def top_order_norm(u, params):
    """``(sum_{|b|=m} int |D^b u|^p rho^{ap})^{1/p}``."""
    p, a, m = params.p, params.a, params.m
    total = 0.0
    for beta in mi.of_order(u.dim, m):
        d = u.derivative(beta)
        u._check_finite(d)
        total += _weighted_sum(u, d, p, p * a)
    return total ** (1.0 / p)


def w_norm(U, params):
    """``(sum_{|a|<=m} int |D^a U|^p rho^{ap} dX)^{1/p}``."""
    p, a, m = params.p, params.a, params.m
    total = 0.0
    for alpha in mi.up_to(U.dim, m):
        d = U.derivative(alpha)
        U._check_finite(d)
        total += _weighted_sum(U, d, p, p * a)
    return total ** (1.0 / p)


def omega_mask(U):
    """Concentric half-size box of the grid's bounding box, as a cell mask."""
    X = U.coords()
    lo = U.origin - 0.5 * U.h
    hi = lo + U.h * np.array(U.shape)
    c, half = 0.5 * (lo + hi), 0.25 * (hi - lo)
    inside = np.all(np.abs(X - c) <= half, axis=-1)
    return inside & U.mask


def w_norm_omega(U, params):
    """Equivalent norm: top-order weighted part plus ``||U||_{L_p(omega)}``."""
    p = params.p
    top = top_order_norm(U, params) ** p
    om = omega_mask(U)
    mag = _pointwise_norm(U.interior_values())
    low = float(np.sum(mag[om] ** p) * U.cell_volume)
    return (top + low) ** (1.0 / p)


@dataclass(frozen=True)
class HardyResult:
    ratio: float
    v: float
    top: float
    s: float

    @property
    def scaled(self):
        """``ratio * s``; bounded uniformly in ``s`` by the Hardy inequality."""
        return self.ratio * self.s


def hardy_check(u, params):
    """Ratio of the full V-norm to its top-order part."""
    top = top_order_norm(u, params)
    v = v_norm(u, params)
    if top == 0:
        raise DegenerateInputError("top-order norm vanishes")
    return HardyResult(ratio=v / top, v=v, top=top, s=params.s)


# ---------------------------------------------------------------------------
# boundary Besov norms
# ---------------------------------------------------------------------------


def _as_columns(f):
    f = np.asarray(f, dtype=float)
    return f[:, None] if f.ndim == 1 else f


def boundary_lp_norm(f, boundary, p):
    f = _as_columns(f)
    return float(np.sum(np.linalg.norm(f, axis=1) ** p * boundary.weights) ** (1.0 / p))


def _pair_blocks(n, block=1024):
    for s in range(0, n, block):
        yield slice(s, min(n, s + block))


def besov_seminorm(f, boundary, params, periodic=True):
    """``(int int |f(X)-f(Y)|^p / |X-Y|^{n-1+sp} dsigma dsigma)^{1/p}``.

    Coincident node pairs are omitted.  On a periodic boundary the nearest
    periodic image is used for ``X - Y`` unless ``periodic`` is False.
    """
    f = _as_columns(f)
    p, s = params.p, params.s
    n = boundary.dim
    w = boundary.weights
    total = 0.0
    N = len(boundary)
    for bi in _pair_blocks(N):
        d = boundary.nodes[bi, None, :] - boundary.nodes[None, :, :]
        if periodic and boundary.period is not None:
            per = boundary.period
            t = np.round((d @ per) / (per @ per))
            d = d - t[..., None] * per
        r = np.linalg.norm(d, axis=2)
        diff = np.linalg.norm(f[bi, None, :] - f[None, :, :], axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.where(r > 0, diff**p / r ** (n - 1 + s * p), 0.0)
        total += float(w[bi] @ k @ w)
    return total ** (1.0 / p)


def besov_norm(f, boundary, params, periodic=True):
    """``||f||_{L_p} + [f]_{B^s_p}``."""
    return boundary_lp_norm(f, boundary, params.p) + besov_seminorm(f, boundary, params, periodic)


# ---------------------------------------------------------------------------
# Whitney arrays
# ---------------------------------------------------------------------------


@dataclass
class WhitneyArray:
    """Jet ``{f_alpha}_{|alpha| <= m-1}`` at the nodes of a boundary.

    Components are stored as plain partial-derivative traces (no powers of
    ``i``), each of shape ``(N,)`` or ``(N, l)``.
    """

    m: int
    boundary: object
    components: dict

    def __post_init__(self):
        n = self.boundary.dim
        want = set(mi.up_to(n, self.m - 1))
        got = set(tuple(k) for k in self.components)
        if got != want:
            raise MultiIndexError(f"array of order m={self.m} needs exactly the multi-indices |alpha| <= {self.m - 1}")
        self.components = {tuple(k): np.asarray(v, dtype=float) for k, v in self.components.items()}

    @property
    def n(self):
        return self.boundary.dim

    def __getitem__(self, alpha):
        alpha = tuple(alpha)
        if sum(alpha) > self.m - 1:
            raise MultiIndexError(f"|alpha| = {sum(alpha)} exceeds m - 1 = {self.m - 1}")
        return self.components[alpha]

    def indices(self):
        return mi.up_to(self.n, self.m - 1)

    @classmethod
    def zeros(cls, m, boundary, ncomp=None):
        shape = (len(boundary),) if ncomp is None else (len(boundary), ncomp)
        return cls(m, boundary, {a: np.zeros(shape) for a in mi.up_to(boundary.dim, m - 1)})

    @classmethod
    def from_derivatives(cls, m, boundary, deriv):
        """Exact array from ``deriv(alpha, X)`` returning ``D^alpha U`` at points X."""
        return cls(m, boundary, {a: np.asarray(deriv(a, boundary.nodes), dtype=float) for a in mi.up_to(boundary.dim, m - 1)})

    @classmethod
    def from_expression(cls, expr, m, boundary):
        """Exact array of a closed-form expression in ``X1, ..., Xn``."""
        return cls.from_derivatives(m, boundary, expression_derivatives(expr, boundary.dim))

    def map(self, fn):
        return WhitneyArray(self.m, self.boundary, {a: fn(v) for a, v in self.components.items()})

    def combine(self, other, fn):
        return WhitneyArray(self.m, self.boundary, {a: fn(v, other.components[a]) for a, v in self.components.items()})

    def max_abs(self):
        return max(float(np.max(np.abs(v))) if v.size else 0.0 for v in self.components.values())

    def to_json(self):
        return json.dumps(
            {
                "m": self.m,
                "nodes": self.boundary.nodes.tolist(),
                "components": {mi.key(a): np.asarray(v).tolist() for a, v in self.components.items()},
            }
        )


def expression_derivatives(expr, n):
    """``deriv(alpha, X)`` for a sympy expression (or string) in X1..Xn."""
    import sympy as sp

    syms = sp.symbols(" ".join(f"X{k + 1}" for k in range(n)))
    e = sp.sympify(expr) if isinstance(expr, str) else expr
    cache = {}

    def deriv(alpha, X):
        alpha = tuple(alpha)
        if alpha not in cache:
            d = e
            for k, a in enumerate(alpha):
                if a:
                    d = sp.diff(d, syms[k], a)
            cache[alpha] = sp.lambdify(syms, d, "numpy")
        X = np.asarray(X, dtype=float)
        out = cache[alpha](*[X[..., k] for k in range(n)])
        return np.broadcast_to(np.asarray(out, dtype=float), X.shape[:-1]).copy()

    return deriv


def whitney_remainder(arr, alpha, i, j):
    """``R_alpha(X_i, X_j) = f_alpha(X_i) - sum_b f_{alpha+b}(X_j) (X_i-X_j)^b / b!``."""
    alpha = tuple(alpha)
    if sum(alpha) > arr.m - 1:
        raise MultiIndexError(f"|alpha| = {sum(alpha)} exceeds m - 1 = {arr.m - 1}")
    i, j = np.asarray(i), np.asarray(j)
    d = arr.boundary.nodes[i] - arr.boundary.nodes[j]
    out = np.array(arr[alpha][i], dtype=float, copy=True)
    for beta in mi.up_to(arr.n, arr.m - 1 - sum(alpha)):
        c = mi.power(d, beta) / mi.fact(beta)
        comp = arr[mi.add(alpha, beta)][j]
        out = out - (c[..., None] * comp if comp.ndim > c.ndim else c * comp)
    return out


def remainder_seminorms(arr, params):
    """Per-index ``(int int |R_alpha|^p / |X-Y|^{p(m-1+s-|alpha|)+n-1})^{1/p}``."""
    p, s, m = params.p, params.s, arr.m
    n = arr.n
    w = arr.boundary.weights
    N = len(arr.boundary)
    out = {}
    for alpha in arr.indices():
        total = 0.0
        expo = p * (m - 1 + s - sum(alpha)) + n - 1
        for bi in _pair_blocks(N, 512):
            I, J = np.meshgrid(np.arange(N)[bi], np.arange(N), indexing="ij")
            R = whitney_remainder(arr, alpha, I, J)
            R = np.abs(R) if R.ndim == 2 else np.linalg.norm(R, axis=-1)
            r = np.linalg.norm(arr.boundary.nodes[I] - arr.boundary.nodes[J], axis=-1)
            with np.errstate(divide="ignore", invalid="ignore"):
                k = np.where(r > 0, R**p / r**expo, 0.0)
            total += float(w[bi] @ k @ w)
        out[alpha] = total ** (1.0 / p)
    return out


def whitney_besov_norm(arr, params):
    """``sum ||f_alpha||_{L_p} + sum (int int |R_alpha|^p / |X-Y|^{...})^{1/p}``."""
    lp = sum(boundary_lp_norm(arr[a], arr.boundary, params.p) for a in arr.indices())
    return lp + sum(remainder_seminorms(arr, params).values())


def componentwise_besov_norm(arr, params):
    """``sum_alpha ||f_alpha||_{B^s_p}`` (no periodic identification)."""
    return sum(besov_norm(arr[a], arr.boundary, params, periodic=False) for a in arr.indices())
