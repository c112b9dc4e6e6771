"""Graph and polygon domains, boundary quadrature and mean-oscillation functionals.

A :class:`GraphDomain` is the region above a piecewise-linear graph
``X_n > phi(X')`` truncated to ``[0, L]^{n-1} x (.., H]``; a
:class:`PolygonDomain` is a bounded simple polygon in the plane.  Both hand
out a :class:`Boundary`, i.e. quadrature nodes at facet centroids together
with exact facet normals and surface weights.
"""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainError, ParameterError, ResolutionError

# rho_reg / rho is confined to [3/4, 5/4]: rho_reg averages rho over a ball of
# radius rho/4 and rho is 1-Lipschitz.
REG_DIST_BOUNDS = (0.75, 1.25)


# ---------------------------------------------------------------------------
# boundary quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Boundary:
    """Boundary quadrature: centroid nodes, outward normals and weights.

    ``facet`` maps every node to the straight facet it lies on; tangential
    differences never mix nodes of different facets.  ``period`` is the
    translation vector of a periodic boundary (``None`` otherwise).
    """

    nodes: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    facet: np.ndarray
    period: np.ndarray = None
    tangents: np.ndarray = None

    @property
    def dim(self):
        return self.nodes.shape[1]

    def __len__(self):
        return self.nodes.shape[0]

    @property
    def area(self):
        return float(np.sum(self.weights))

    def displacement(self, i, j):
        """``X_i - X_j`` using the nearest periodic image of ``X_j``."""
        d = self.nodes[np.asarray(i)] - self.nodes[np.asarray(j)]
        if self.period is not None:
            per = self.period
            t = np.round((d @ per) / (per @ per))
            d = d - t[..., None] * per
        return d

    def pairwise_displacement(self):
        d = self.nodes[:, None, :] - self.nodes[None, :, :]
        if self.period is not None:
            per = self.period
            t = np.round((d @ per) / (per @ per))
            d = d - t[..., None] * per
        return d

    def tangential_gradient(self, f):
        """Tangential gradient of nodal data, differenced facet by facet.

        Only planar boundaries (n = 2) are supported; nodes of one facet are
        equispaced so second-order differences apply whenever a facet holds
        three or more nodes.
        """
        if self.dim != 2:
            raise NotImplementedError("tangential gradients are implemented for n = 2")
        f = np.asarray(f, dtype=float)
        ds = np.zeros(len(self))
        for fid in np.unique(self.facet):
            idx = np.flatnonzero(self.facet == fid)
            if idx.size < 2:
                raise ResolutionError(
                    "tangential differencing needs at least 2 nodes per facet"
                )
            s = (self.nodes[idx] - self.nodes[idx[0]]) @ self.tangents[idx[0]]
            order = 2 if idx.size >= 3 else 1
            ds[idx] = np.gradient(f[idx], s, edge_order=order)
        return ds[:, None] * self.tangents

    def tangential_derivative(self, f):
        """Scalar derivative along the unit tangent, per node."""
        return np.sum(self.tangential_gradient(f) * self.tangents, axis=1)


def _polyline_boundary(vertices, closed, nodes_per_facet, period=None):
    v = np.asarray(vertices, dtype=float)
    a = v if closed else v[:-1]
    b = np.roll(v, -1, axis=0) if closed else v[1:]
    if period is not None and not closed:
        pass
    k = int(nodes_per_facet)
    if k < 1:
        raise ParameterError("nodes_per_facet must be >= 1")
    t = (np.arange(k) + 0.5) / k
    seg = b - a
    length = np.linalg.norm(seg, axis=1)
    if np.any(length <= 0):
        raise DomainError("degenerate facet of zero length")
    tang = seg / length[:, None]
    # outward normal of a counterclockwise curve (or of the graph's lower side)
    nrm = np.stack([tang[:, 1], -tang[:, 0]], axis=1)
    nodes = (a[:, None, :] + t[None, :, None] * seg[:, None, :]).reshape(-1, 2)
    weights = np.repeat(length / k, k)
    facet = np.repeat(np.arange(len(a)), k)
    return Boundary(
        nodes=nodes,
        normals=np.repeat(nrm, k, axis=0),
        weights=weights,
        facet=facet,
        period=None if period is None else np.asarray(period, dtype=float),
        tangents=np.repeat(tang, k, axis=0),
    )


def segment_boundary(a, b, n_nodes):
    """A single flat open segment from ``a`` to ``b`` (normal to its right)."""
    return _polyline_boundary(np.array([a, b], dtype=float), False, n_nodes)


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------


def _dist_to_segments(points, a, b):
    p = points[:, None, :]
    d = b - a
    dd = np.einsum("ij,ij->i", d, d)
    t = np.clip(np.einsum("pij,ij->pi", p - a[None], d) / dd, 0.0, 1.0)
    q = a[None] + t[..., None] * d[None]
    return np.min(np.linalg.norm(p - q, axis=2), axis=1)


def _dist_to_triangles(points, tri):
    """Exact distance from points (P, 3) to triangles (T, 3, 3)."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    nrm = np.cross(b - a, c - a)
    nrm = nrm / np.linalg.norm(nrm, axis=1)[:, None]
    p = points[:, None, :]
    h = np.einsum("pij,ij->pi", p - a[None], nrm)
    proj = p - h[..., None] * nrm[None]
    # barycentric test for the projection
    v0, v1 = b - a, c - a
    v2 = proj - a[None]
    d00 = np.einsum("ij,ij->i", v0, v0)
    d01 = np.einsum("ij,ij->i", v0, v1)
    d11 = np.einsum("ij,ij->i", v1, v1)
    d20 = np.einsum("pij,ij->pi", v2, v0)
    d21 = np.einsum("pij,ij->pi", v2, v1)
    den = d00 * d11 - d01 * d01
    lv = (d11 * d20 - d01 * d21) / den
    lw = (d00 * d21 - d01 * d20) / den
    inside = (lv >= 0) & (lw >= 0) & (lv + lw <= 1)
    best = np.where(inside, np.abs(h), np.inf)

    def seg(u, w):
        d = w - u
        dd = np.einsum("ij,ij->i", d, d)
        t = np.clip(np.einsum("pij,ij->pi", p - u[None], d) / dd, 0.0, 1.0)
        q = u[None] + t[..., None] * d[None]
        return np.linalg.norm(p - q, axis=2)

    best = np.minimum(best, seg(a, b))
    best = np.minimum(best, seg(b, c))
    best = np.minimum(best, seg(c, a))
    return np.min(best, axis=1)


def _chunked(fn, points, chunk=2048):
    out = np.empty(points.shape[0])
    for s in range(0, points.shape[0], chunk):
        out[s : s + chunk] = fn(points[s : s + chunk])
    return out


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------


@dataclass
class GraphDomain:
    """Special Lipschitz domain above a piecewise-linear graph.

    ``phi_grid`` holds the nodal values of ``phi`` on a uniform grid over the
    cell ``[0, L]^{n-1}``.  For a periodic graph the grid has ``N`` points per
    axis (the value at ``L`` repeats the one at ``0``); otherwise ``N + 1``
    and ``phi`` is continued affinely outside the cell.
    """

    n: int
    phi_grid: np.ndarray
    cell: tuple
    periodic: bool = True
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.phi_grid = np.asarray(self.phi_grid, dtype=float)
        if self.n not in (2, 3):
            raise ParameterError("graph domains are implemented for n in {2, 3}")
        if self.phi_grid.ndim != self.n - 1:
            raise ParameterError("phi_grid must have n - 1 axes")
        self.cell = (float(self.cell[0]), float(self.cell[1]))

    # -- construction helpers ------------------------------------------------
    @classmethod
    def flat(cls, n=2, N=64, L=1.0, H=1.0):
        shape = (N,) * (n - 1)
        return cls(n, np.zeros(shape), (L, H))

    @classmethod
    def sawtooth(cls, slope=1.0, period=1.0, N=64, L=1.0, H=1.0):
        """Periodic zigzag with slopes ``+-slope``; kinks fall on grid nodes."""
        x = np.arange(N) * (L / N)
        u = np.mod(x, period) / period
        phi = slope * period * (0.5 - np.abs(u - 0.5))
        return cls(2, phi, (L, H))

    @classmethod
    def affine(cls, slope, offset=0.0, N=64, L=1.0, H=1.0):
        slope = np.atleast_1d(np.asarray(slope, dtype=float))
        n = slope.size + 1
        axes = [np.linspace(0.0, L, N + 1)] * (n - 1)
        grids = np.meshgrid(*axes, indexing="ij")
        phi = offset + sum(s * g for s, g in zip(slope, grids))
        return cls(n, phi, (L, H), periodic=False)

    @classmethod
    def from_function(cls, func, n=2, N=64, L=1.0, H=1.0, periodic=True):
        m = N if periodic else N + 1
        axes = [np.arange(m) * (L / N)] * (n - 1)
        grids = np.meshgrid(*axes, indexing="ij")
        return cls(n, func(*grids), (L, H), periodic=periodic)

    # -- grid bookkeeping ----------------------------------------------------
    @property
    def L(self):
        return self.cell[0]

    @property
    def H(self):
        return self.cell[1]

    @property
    def N(self):
        m = self.phi_grid.shape[0]
        return m if self.periodic else m - 1

    @property
    def h(self):
        return self.L / self.N

    def _index(self, k):
        if self.periodic:
            return np.mod(k, self.N)
        return np.clip(k, 0, self.N)

    def _node_value(self, idx):
        return self.phi_grid[tuple(self._index(np.asarray(i)) for i in idx)]

    def _slopes_1d(self):
        ext = self._values_1d(np.arange(self.N + 1))
        return np.diff(ext) / self.h

    def _values_1d(self, k):
        k = np.asarray(k)
        if self.periodic:
            return self.phi_grid[np.mod(k, self.N)]
        kk = np.clip(k, 0, self.N)
        base = self.phi_grid[kk]
        s0 = (self.phi_grid[1] - self.phi_grid[0]) / self.h
        s1 = (self.phi_grid[-1] - self.phi_grid[-2]) / self.h
        return base + np.where(k < 0, s0 * (k - kk) * self.h, 0.0) + np.where(
            k > self.N, s1 * (k - kk) * self.h, 0.0
        )

    def slope_at_facet(self, k):
        """Slope of facet ``[k h, (k+1) h]`` (n = 2), any integer ``k``."""
        k = np.asarray(k)
        v0 = self._values_1d(k)
        v1 = self._values_1d(k + 1)
        if self.periodic:
            return (v1 - v0) / self.h
        return (v1 - v0) / self.h

    # -- phi and its gradient -------------------------------------------------
    def phi(self, xp):
        """Evaluate ``phi`` at points ``xp`` (shape ``(...,)`` or ``(..., n-1)``)."""
        xp = np.asarray(xp, dtype=float)
        if self.n == 2:
            if xp.ndim >= 2 and xp.shape[-1] == 1:
                xp = xp[..., 0]
            u = xp / self.h
            k = np.floor(u).astype(int)
            t = u - k
            return (1 - t) * self._values_1d(k) + t * self._values_1d(k + 1)
        u = xp / self.h
        k = np.floor(u).astype(int)
        t = u - k
        i, j = k[..., 0], k[..., 1]
        s, r = t[..., 0], t[..., 1]
        v00 = self._node_value((i, j))
        v11 = self._node_value((i + 1, j + 1))
        v10 = self._node_value((i + 1, j))
        v01 = self._node_value((i, j + 1))
        lower = s >= r  # triangle (00, 10, 11)
        return np.where(
            lower,
            v00 + s * (v10 - v00) + r * (v11 - v10),
            v00 + r * (v01 - v00) + s * (v11 - v01),
        )

    def grad_phi(self, xp):
        """Gradient of ``phi``; at kinks the right/upper facet is used."""
        xp = np.asarray(xp, dtype=float)
        if self.n == 2:
            if xp.ndim >= 2 and xp.shape[-1] == 1:
                xp = xp[..., 0]
            k = np.floor(xp / self.h).astype(int)
            return self.slope_at_facet(k)[..., None]
        u = xp / self.h
        k = np.floor(u).astype(int)
        t = u - k
        i, j = k[..., 0], k[..., 1]
        lower = t[..., 0] >= t[..., 1]
        v00 = self._node_value((i, j))
        v11 = self._node_value((i + 1, j + 1))
        v10 = self._node_value((i + 1, j))
        v01 = self._node_value((i, j + 1))
        gx = np.where(lower, v10 - v00, v11 - v01) / self.h
        gy = np.where(lower, v11 - v10, v01 - v00) / self.h
        return np.stack([gx, gy], axis=-1)

    # -- facets ---------------------------------------------------------------
    def _vertices_1d(self, pad=0):
        k = np.arange(-pad, self.N + 1 + pad)
        return np.stack([k * self.h, self._values_1d(k)], axis=1)

    def _triangles(self):
        N = self.N
        i, j = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
        i, j = i.ravel(), j.ravel()
        h = self.h

        def P(a, b):
            return np.stack([a * h, b * h, self._node_value((a, b))], axis=-1)

        lower = np.stack([P(i, j), P(i + 1, j), P(i + 1, j + 1)], axis=1)
        upper = np.stack([P(i, j), P(i + 1, j + 1), P(i, j + 1)], axis=1)
        return np.concatenate([lower, upper], axis=0)

    @property
    def facet_gradients(self):
        if self.n == 2:
            return self.slope_at_facet(np.arange(self.N))[:, None]
        tri = self._triangles()
        cen = tri.mean(axis=1)[:, :2]
        return self.grad_phi(cen)

    @property
    def lip_const(self):
        g = self.facet_gradients
        return float(np.max(np.linalg.norm(g, axis=1)))

    def surface_area(self):
        """Closed-form area of the graph over one cell: sum of sqrt(1+|grad phi|^2) dA."""
        g = self.facet_gradients
        dA = self.h ** (self.n - 1) / (1 if self.n == 2 else 2)
        return float(np.sum(np.sqrt(1 + np.sum(g * g, axis=1))) * dA)

    def boundary(self, nodes_per_facet=1, periodic=None, pad_facets=0):
        """Facet-centroid quadrature of the graph over one cell.

        ``pad_facets > 0`` (n = 2) appends that many facets on each side of
        the cell; the result then covers more than one period and carries no
        period.
        """
        periodic = (self.periodic if periodic is None else periodic) and pad_facets == 0
        if self.n == 2:
            v = self._vertices_1d(pad_facets)
            # traverse left to right: the right-hand normal points downwards
            per = np.array([self.L, 0.0]) if periodic else None
            return _polyline_boundary(v, False, nodes_per_facet, period=per)
        if nodes_per_facet != 1:
            raise NotImplementedError("facet subdivision is implemented for n = 2")
        tri = self._triangles()
        g = self.grad_phi(tri.mean(axis=1)[:, :2])
        nrm = np.concatenate([g, -np.ones((g.shape[0], 1))], axis=1)
        nrm /= np.linalg.norm(nrm, axis=1)[:, None]
        area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
        per = None
        if periodic:
            per = np.array([[self.L, 0, 0], [0, self.L, 0]], dtype=float)[0]
        return Boundary(
            nodes=tri.mean(axis=1),
            normals=nrm,
            weights=area,
            facet=np.arange(tri.shape[0]),
            period=per,
        )

    # -- point queries ----------------------------------------------------------
    def contains(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X[:, -1] > self.phi(X[:, :-1])

    def distance(self, X):
        """Exact Euclidean distance to the graph (periodic images included)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.n == 2:
            v = self._vertices_1d()
            a, b = v[:-1], v[1:]
            if self.periodic:
                shifts = [-self.L, 0.0, self.L]
            else:
                # affine continuation: long end pieces
                big = 1e3 * (self.L + self.H)
                s0 = self.slope_at_facet(-1)
                s1 = self.slope_at_facet(self.N)
                a = np.vstack([[v[0, 0] - big, v[0, 1] - big * s0], a, [v[-1]]])
                b = np.vstack([[v[0]], b, [v[-1, 0] + big, v[-1, 1] + big * s1]])
                shifts = [0.0]
            A = np.concatenate([a + [s, 0.0] for s in shifts])
            B = np.concatenate([b + [s, 0.0] for s in shifts])
            return _chunked(lambda P: _dist_to_segments(P, A, B), X)
        tri = self._triangles()
        if self.periodic:
            tris = [tri + np.array([sx, sy, 0.0]) for sx in (-self.L, 0, self.L) for sy in (-self.L, 0, self.L)]
            tri = np.concatenate(tris)
        return _chunked(lambda P: _dist_to_triangles(P, tri), X, chunk=256)

    # -- serialization -----------------------------------------------------------
    def to_json(self):
        return json.dumps(
            {
                "n": self.n,
                "phi_grid": self.phi_grid.tolist(),
                "cell": [self.L, self.H],
                "boundary_quadrature": "centroid",
                "periodic": self.periodic,
            }
        )

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text) if isinstance(text, str) else text
        if doc.get("boundary_quadrature", "centroid") != "centroid":
            raise ParameterError("only centroid boundary quadrature is supported")
        return cls(int(doc["n"]), np.asarray(doc["phi_grid"], dtype=float), tuple(doc["cell"]), bool(doc.get("periodic", True)))


@dataclass
class PolygonDomain:
    """Bounded simple polygon, stored counterclockwise."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ParameterError("polygon needs at least three planar vertices")
        if _signed_area(v) < 0:
            v = v[::-1].copy()
        if not _is_simple(v):
            raise DomainError("polygon is self-intersecting")
        self.vertices = v

    n = 2

    @classmethod
    def lshape(cls):
        return cls([(0, 0), (1, 0), (1, 0.5), (0.5, 0.5), (0.5, 1), (0, 1)])

    @classmethod
    def square(cls, side=1.0):
        return cls([(0, 0), (side, 0), (side, side), (0, side)])

    @property
    def area(self):
        return _signed_area(self.vertices)

    @property
    def bbox(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def boundary(self, spacing=None, nodes_per_edge=None):
        """Subdivide each edge into equal pieces of length <= ``spacing``."""
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        length = np.linalg.norm(e, axis=1)
        if nodes_per_edge is None:
            if spacing is None:
                spacing = length.min() / 8
            counts = np.maximum(np.ceil(length / spacing - 1e-9).astype(int), 1)
        else:
            counts = np.full(len(v), int(nodes_per_edge))
        parts = []
        for k, c in enumerate(counts):
            b = _polyline_boundary(np.array([v[k], v[(k + 1) % len(v)]]), False, c)
            parts.append((b, k))
        return Boundary(
            nodes=np.concatenate([b.nodes for b, _ in parts]),
            normals=np.concatenate([b.normals for b, _ in parts]),
            weights=np.concatenate([b.weights for b, _ in parts]),
            facet=np.concatenate([np.full(len(b), k) for b, k in parts]),
            tangents=np.concatenate([b.tangents for b, _ in parts]),
        )

    def contains(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        x, y = X[:, 0:1], X[:, 1:2]
        cond = (v[None, :, 1] > y) != (w[None, :, 1] > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = v[None, :, 0] + (y - v[None, :, 1]) * (w[None, :, 0] - v[None, :, 0]) / (
                w[None, :, 1] - v[None, :, 1]
            )
        crossings = np.sum(cond & (x < xc), axis=1)
        inside = crossings % 2 == 1
        return inside & (self.distance(X) > 0)

    def distance(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        v = self.vertices
        return _chunked(lambda P: _dist_to_segments(P, v, np.roll(v, -1, axis=0)), X)

    def to_json(self):
        return json.dumps({"n": 2, "vertices": self.vertices.tolist()})

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text) if isinstance(text, str) else text
        return cls(np.asarray(doc["vertices"], dtype=float))


def _signed_area(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _is_simple(v):
    m = len(v)
    segs = [(v[i], v[(i + 1) % m]) for i in range(m)]

    def orient(p, q, r):
        return np.sign((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))

    for i in range(m):
        for j in range(i + 1, m):
            if j == i + 1 or (i == 0 and j == m - 1):
                continue
            p1, p2 = segs[i]
            q1, q2 = segs[j]
            if orient(p1, p2, q1) * orient(p1, p2, q2) < 0 and orient(q1, q2, p1) * orient(q1, q2, p2) < 0:
                return False
    return True


def load_domain(text):
    """Build a graph or polygon domain from its JSON document."""
    doc = json.loads(text) if isinstance(text, str) else text
    if "vertices" in doc:
        return PolygonDomain.from_json(doc)
    return GraphDomain.from_json(doc)


# ---------------------------------------------------------------------------
# regularized distance
# ---------------------------------------------------------------------------


def _ball_rule(n):
    """Smooth-weighted sample of the unit ball: (offsets, weights)."""
    r, wr = np.polynomial.legendre.leggauss(4)
    r = 0.5 * (r + 1)
    wr = 0.5 * wr * r ** (n - 1) * np.exp(-1.0 / (1.0 - r**2 + 1e-300))
    if n == 2:
        th = 2 * np.pi * np.arange(8) / 8
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    else:
        g = (1 + 5**0.5) / 2
        dirs = np.array(
            [[0, s1, s2 * g] for s1 in (-1, 1) for s2 in (-1, 1)]
            + [[s1, s2 * g, 0] for s1 in (-1, 1) for s2 in (-1, 1)]
            + [[s2 * g, 0, s1] for s1 in (-1, 1) for s2 in (-1, 1)],
            dtype=float,
        )
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    off = (r[:, None, None] * dirs[None]).reshape(-1, n)
    w = np.repeat(wr, dirs.shape[0])
    return off, w / w.sum()


def regularized_distance(domain, points):
    """Smoothed distance to the boundary, ``c1 rho <= rho_reg <= c2 rho``.

    The exact distance is averaged over the ball of radius ``rho / 4`` with a
    smooth radial weight; the constants are :data:`REG_DIST_BOUNDS`.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if not np.all(domain.contains(X)):
        raise DomainError("regularized distance requested outside the domain or on its boundary")
    rho = domain.distance(X)
    if np.any(rho <= 0):
        raise DomainError("point lies on the boundary")
    off, w = _ball_rule(X.shape[1])
    Y = X[:, None, :] + 0.25 * rho[:, None, None] * off[None]
    rr = domain.distance(Y.reshape(-1, X.shape[1])).reshape(Y.shape[:2])
    return rr @ w


# ---------------------------------------------------------------------------
# mean oscillation
# ---------------------------------------------------------------------------


@dataclass
class OscillationReport:
    """Mean-oscillation summary.

    ``table`` maps each radius to the supremum over centres of the ball mean
    of ``|f - f_B|``; ``star_table`` does the same for the double mean of
    ``|f(x) - f(y)|``.  ``star_value`` is the entry of ``star_table`` at the
    smallest radius whose balls all hold enough samples.
    """

    seminorm: float
    table: dict
    star_value: float
    star_table: dict = field(default_factory=dict)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["radius", "sup_oscillation", "sup_double_mean"])
        for r in sorted(self.table):
            w.writerow([repr(float(r)), repr(float(self.table[r])), repr(float(self.star_table.get(r, np.nan)))])
        return buf.getvalue()

    def to_json(self):
        return json.dumps(
            {
                "seminorm": self.seminorm,
                "star_value": self.star_value,
                "table": [[float(r), float(v)] for r, v in sorted(self.table.items())],
                "star_table": [[float(r), float(v)] for r, v in sorted(self.star_table.items())],
            }
        )


def _as_values(values):
    v = np.asarray(values, dtype=float)
    return v[:, None] if v.ndim == 1 else v


def _ball_groups(points, radius, centers, tree):
    return tree.query_ball_point(centers, radius)


def _mean_osc(vals, w):
    W = w.sum()
    mean = (w @ vals) / W
    return float(w @ np.linalg.norm(vals - mean, axis=1) / W)


_MAX_PAIR_SAMPLES = 400


def _double_mean(vals, w):
    W = w.sum()
    if vals.shape[1] == 1:
        order = np.argsort(vals[:, 0], kind="stable")
        v, ww = vals[order, 0], w[order]
        c = np.cumsum(ww)
        # sum_{i,j} w_i w_j |v_i - v_j| = 2 sum_i w_i v_i (C_{i-1} - (W - C_i))
        return float(2 * np.sum(ww * v * ((c - ww) - (W - c))) / W**2)
    if vals.shape[0] > _MAX_PAIR_SAMPLES:
        # strided subsample keeps the pairwise cost bounded for vector data
        idx = np.linspace(0, vals.shape[0] - 1, _MAX_PAIR_SAMPLES).astype(int)
        vals, w = vals[idx], w[idx]
        W = w.sum()
    d = np.linalg.norm(vals[:, None, :] - vals[None, :, :], axis=2)
    return float(w @ d @ w / W**2)


def _prepare(points, values, weights, centers):
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    V = _as_values(values)
    w = np.ones(P.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    C = P if centers is None else np.asarray(centers, dtype=float).reshape(-1, P.shape[1])
    return P, V, w, C


def _oscillation_tables(P, V, w, C, radii, min_samples, need_double):
    tree = cKDTree(P)
    table, star, counts = {}, {}, {}
    for r in radii:
        groups = tree.query_ball_point(C, r)
        sup_m, sup_d, least = 0.0, 0.0, np.inf
        for g in groups:
            least = min(least, len(g))
            if len(g) < 2:
                raise ResolutionError(f"ball of radius {r} holds fewer than 2 samples")
            g = np.asarray(g)
            vals, ww = V[g], w[g]
            sup_m = max(sup_m, _mean_osc(vals, ww))
            if need_double:
                sup_d = max(sup_d, _double_mean(vals, ww))
        table[float(r)] = sup_m
        if need_double:
            star[float(r)] = sup_d
        counts[float(r)] = least
    return table, star, counts


def bmo_seminorm(points, values, radii, weights=None, centers=None, min_samples=8, star=True):
    """Discrete BMO seminorm of sampled data.

    Balls are centred at ``centers`` (default: the samples themselves) and
    intersected with the sample cloud, so a domain is handled by sampling
    only inside it.  Values may be vector valued (Euclidean norm).  With
    ``star=False`` the double-mean table is skipped and ``star_value`` is NaN.
    """
    radii = sorted(float(r) for r in radii)
    if not radii:
        raise ParameterError("empty radius list")
    P, V, w, C = _prepare(points, values, weights, centers)
    table, double, counts = _oscillation_tables(P, V, w, C, radii, min_samples, star)
    resolvable = [r for r in radii if counts[r] >= min_samples]
    star_r = resolvable[0] if resolvable else radii[-1]
    return OscillationReport(
        seminorm=max(table.values()),
        table=table,
        star_value=double[star_r] if star else float("nan"),
        star_table=double,
    )


def star_oscillation(points, values, epsilon_schedule, weights=None, centers=None, min_samples=8):
    """Small-scale double-mean oscillation, the surrogate for ``{f}_*``.

    Returns the supremum over centres of the double mean of ``|f(x)-f(y)|``
    at the smallest radius of the schedule whose balls hold at least
    ``min_samples`` samples.
    """
    sched = sorted(float(r) for r in epsilon_schedule)
    if len(sched) < 3:
        raise ParameterError("epsilon schedule needs at least 3 radii")
    P, V, w, C = _prepare(points, values, weights, centers)
    _, star, counts = _oscillation_tables(P, V, w, C, sched, min_samples, True)
    for r in sched:
        if counts[r] >= min_samples:
            return star[r]
    raise ResolutionError("no radius in the schedule is resolved by the sampling")


def double_mean_table(points, values, radii, weights=None, centers=None):
    """Per-radius supremum of the double-mean oscillation."""
    P, V, w, C = _prepare(points, values, weights, centers)
    _, star, _ = _oscillation_tables(P, V, w, C, sorted(radii), 0, True)
    return star
