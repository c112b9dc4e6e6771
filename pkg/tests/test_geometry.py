import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lipspace.errors import DomainError, ParameterError
from lipspace.geometry import (
    REG_DIST_BOUNDS,
    GraphDomain,
    PolygonDomain,
    bmo_seminorm,
    load_domain,
    regularized_distance,
    star_oscillation,
)


def step_samples(n=4000):
    x = (np.arange(n) + 0.5) / n * 2 - 1
    return x, (x > 0).astype(float), np.full(n, 2.0 / n)


def test_lip_const_is_max_slope():
    g = GraphDomain.sawtooth(slope=1.7, N=16)
    assert g.lip_const == pytest.approx(1.7)
    slopes = np.abs([g.slope_at_facet(k) for k in range(g.N)])
    assert g.lip_const == pytest.approx(slopes.max())


@pytest.mark.parametrize("dom", [GraphDomain.sawtooth(N=8), GraphDomain.flat(N=8), GraphDomain.affine(0.3, N=8)])
def test_normals_unit_and_downward(dom):
    b = dom.boundary(nodes_per_facet=3)
    assert np.allclose(np.linalg.norm(b.normals, axis=1), 1, atol=1e-14)
    assert np.all(b.normals[:, -1] < 0)
    # normal orthogonal to the facet tangent
    assert np.abs(np.sum(b.normals * b.tangents, axis=1)).max() < 1e-14


def test_weights_sum_to_graph_area():
    # sawtooth slope 1 over a unit cell: length sqrt(2)
    g = GraphDomain.sawtooth(slope=1.0, N=8)
    b = g.boundary(nodes_per_facet=5)
    assert b.area == pytest.approx(np.sqrt(2), rel=1e-12)
    assert b.area == pytest.approx(g.surface_area(), rel=1e-12)


def test_weights_sum_3d():
    g = GraphDomain.flat(n=3, N=4)
    assert g.boundary().area == pytest.approx(1.0, rel=1e-12)


def test_polygon_lshape():
    P = PolygonDomain.lshape()
    b = P.boundary(spacing=1 / 32)
    assert P.area == pytest.approx(0.75)
    # perimeter of the unit L-shape is 4
    assert b.area == pytest.approx(4.0, rel=1e-12)
    # outward normals: a point nudged along the normal leaves the domain
    assert not np.any(P.contains(b.nodes + 1e-3 * b.normals))
    assert np.all(P.contains(b.nodes - 1e-3 * b.normals))


def test_polygon_rejects_self_intersection():
    with pytest.raises(DomainError):
        PolygonDomain(np.array([[0, 0], [1, 1], [1, 0], [0, 1]], dtype=float))


def test_regularized_distance_flat():
    g = GraphDomain.flat(N=8)
    r = regularized_distance(g, [[0.3, 0.7]])[0]
    c1, c2 = REG_DIST_BOUNDS
    assert c1 * 0.7 <= r <= c2 * 0.7


def test_regularized_distance_sawtooth_against_brute_force():
    g = GraphDomain.sawtooth(slope=1.0, N=8)
    X = np.array([[0.37, 0.9], [0.5, 0.81], [0.81, 2.0]])
    # brute force: minimum over a fine sampling of the graph and its images
    t = np.linspace(-1, 2, 300001)
    curve = np.stack([t, g.phi(t)], axis=1)
    rho = np.array([np.min(np.linalg.norm(curve - x, axis=1)) for x in X])
    assert np.allclose(g.distance(X), rho, atol=1e-5)
    ratio = regularized_distance(g, X) / rho
    assert np.all((ratio >= REG_DIST_BOUNDS[0]) & (ratio <= REG_DIST_BOUNDS[1]))


def test_regularized_distance_on_boundary_raises():
    g = GraphDomain.sawtooth(N=8)
    with pytest.raises(DomainError):
        regularized_distance(g, [[0.25, float(g.phi(np.array([0.25]))[0])]])


def test_bmo_constant():
    x = np.linspace(0, 1, 300)[:, None]
    assert bmo_seminorm(x, np.full(300, 5.0), [0.05, 0.2]).seminorm == 0


def test_bmo_heaviside():
    # interval means of a step give sup_t 2t(1-t) = 1/2
    x, v, w = step_samples()
    rep = bmo_seminorm(x[:, None], v, [0.05, 0.1, 0.2, 0.4], weights=w, centers=np.linspace(-0.3, 0.3, 241)[:, None])
    assert rep.seminorm == pytest.approx(0.5, rel=0.01)
    assert all(val >= 0 for val in rep.table.values())
    assert rep.star_value <= 2 * rep.seminorm + 1e-12


def test_bmo_empty_radii():
    with pytest.raises(ParameterError):
        bmo_seminorm(np.zeros((3, 1)), np.zeros(3), [])


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-5, 5), c=st.floats(-10, 10))
def test_bmo_affine_equivariance(a, c):
    x = np.linspace(0, 1, 400)
    f = np.sin(7 * x) + (x > 0.4)
    r = [0.05, 0.15]
    base = bmo_seminorm(x[:, None], f, r, star=False).seminorm
    val = bmo_seminorm(x[:, None], a * f + c, r, star=False).seminorm
    assert val == pytest.approx(abs(a) * base, rel=1e-9, abs=1e-12)


def test_star_smooth_vs_step():
    x = np.linspace(0, 1, 2001)
    sched = [0.01, 0.02, 0.05, 0.1]
    smooth = star_oscillation(x[:, None], np.sin(2 * np.pi * x), sched)
    step = star_oscillation(x[:, None], (x > 0.5).astype(float), sched)
    assert smooth < 0.05
    # a jump never becomes small at small scales
    assert step > 0.4


def test_star_two_bumps():
    x = np.linspace(0, 10, 10001)
    gentle = np.exp(-((x - 2.5) ** 2))
    steep = np.exp(-(((x - 7.5) / 0.05) ** 2))
    sched = [0.01, 0.02, 0.05]
    both = star_oscillation(x[:, None], gentle + steep, sched)
    only = star_oscillation(x[:, None], steep, sched)
    assert both == pytest.approx(only, rel=0.05)


def test_star_needs_three_radii():
    with pytest.raises(ParameterError):
        star_oscillation(np.zeros((10, 1)), np.zeros(10), [0.1, 0.2])


def test_domain_json_roundtrip():
    g = GraphDomain.sawtooth(slope=0.5, N=8)
    h = load_domain(g.to_json())
    assert np.array_equal(h.phi_grid, g.phi_grid)
    assert h.lip_const == g.lip_const
