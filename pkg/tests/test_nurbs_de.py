import numpy as np
import pytest
from hypothesis import given, strategies as st

from magshape.nurbs import (NurbsCurve, basis_matrix, circle_arc, ellipse_angle, ellipse_arc,
                            ellipse_lambda, eval_basis, eval_curve, polyline)
from magshape.nurbs_de import (CurveBinding, DesignElement, DesignElementMap, GeometryError,
                               PointBinding, de_invert, de_jacobian, de_map, deform_mesh)
from magshape.problems import die_press_geometry as geo
from magshape.problems.die_press import DE_MESH_ASSET, asset_path
from magshape.mesh import load_mesh

from oracles import cox_de_boor

U = np.linspace(0, 1, 100)


def test_bernstein_basis():
    np.testing.assert_allclose(eval_basis([0, 0, 0, 1, 1, 1], 2, 0.5), [0.25, 0.5, 0.25])
    np.testing.assert_allclose(eval_basis([0, 0, 0, 1, 1, 1], 2, 0.0), [1, 0, 0])
    np.testing.assert_allclose(eval_basis([0, 0, 0, 1, 1, 1], 2, 1.0), [0, 0, 1])


@pytest.mark.parametrize("u", [0.0, 0.1, 0.25, 0.5, 0.7, 1.0])
def test_two_span_basis_against_recursion(u):
    knots = [0, 0, 0, 0.5, 1, 1, 1]
    full = basis_matrix(knots, 2, [u], nder=0)[0, 0]
    ref = [cox_de_boor(knots, i, 2, u) for i in range(4)]
    np.testing.assert_allclose(full, ref, atol=1e-15)
    vals = eval_basis(knots, 2, u)
    nz = np.flatnonzero(np.abs(np.array(ref)) > 0)
    np.testing.assert_allclose(vals[vals != 0], np.array(ref)[nz], atol=1e-15)


def test_basis_rejects_outside_range():
    with pytest.raises(ValueError):
        eval_basis([0, 0, 0, 1, 1, 1], 2, 1.5)


@given(st.floats(0, 1), st.lists(st.floats(0.1, 10), min_size=4, max_size=4))
def test_rational_partition_of_unity(u, w):
    c = NurbsCurve(2, [0, 0, 0, 0.4, 1, 1, 1], np.zeros((4, 2)), w)
    assert abs(c.rational_basis(u).sum() - 1.0) <= 1e-14


@pytest.mark.parametrize("r", [1.0, 5.1e-3, 9.0])
def test_circle_arc_is_exact(r):
    c = circle_arc(r)
    P = eval_curve(c, U)
    np.testing.assert_allclose(P[:, 0] ** 2 + P[:, 1] ** 2, r * r, rtol=1e-12)
    np.testing.assert_allclose(c.evaluate(0.0), [r, 0])
    np.testing.assert_allclose(c.evaluate(1.0), [0, r], atol=1e-15 * r)
    np.testing.assert_allclose(c.evaluate(0.5), [r / np.sqrt(2), r / np.sqrt(2)], rtol=1e-15)


def test_circle_arc_rejects_bad_radius():
    with pytest.raises(ValueError):
        circle_arc(0.0)


def test_ellipse_on_unit_circle():
    alpha = ellipse_angle(1.0, 0.5)
    assert alpha == pytest.approx(np.pi / 6, abs=1e-15)
    assert ellipse_lambda(1.0, alpha) == pytest.approx(-0.2679491924311227, abs=1e-15)
    assert ellipse_lambda(1.0, alpha) == pytest.approx(-np.tan(alpha / 2), abs=1e-15)
    P = ellipse_arc(1.0, 1.0, 0.5).evaluate(U)
    np.testing.assert_allclose(np.hypot(P[:, 0], P[:, 1]), 1.0, rtol=1e-12)
    np.testing.assert_allclose(P[-1], [np.cos(alpha), 0.5], atol=1e-15)


@given(st.floats(1, 30), st.floats(1, 30), st.floats(0.01, 0.99))
def test_ellipse_lambda_identity(a, b, t):
    # the unsimplified form loses digits to cos(alpha) - 1 for small angles
    alpha = ellipse_angle(b, t * b)
    assert ellipse_lambda(a, alpha) == pytest.approx(-np.tan(alpha / 2), abs=1e-13)


def test_die_press_ellipse_is_exact():
    L2, L3, y = 16.0, 14.5, 10.5
    assert ellipse_angle(L3, y) == pytest.approx(np.arcsin(10.5 / 14.5), abs=1e-15)
    assert ellipse_angle(L3, y) == pytest.approx(0.80978, abs=1e-5)
    P = ellipse_arc(L2, L3, y).evaluate(U)
    np.testing.assert_allclose((P[:, 0] / L2) ** 2 + (P[:, 1] / L3) ** 2, 1.0, rtol=1e-12)


@pytest.mark.parametrize("y", [0.0, 14.5, 15.0])
def test_ellipse_rejects_bad_end_height(y):
    with pytest.raises(ValueError):
        ellipse_arc(16.0, 14.5, y)


def test_polyline_midpoint():
    c = polyline([[0, 0], [2, 4]])
    np.testing.assert_allclose(c.evaluate(0.5), [1, 2])


def test_curve_derivative_matches_differences():
    c = ellipse_arc(2.0, 1.5, 1.0)
    u, h = 0.37, 1e-6
    fd = (c.evaluate(u + h) - c.evaluate(u - h)) / (2 * h)
    np.testing.assert_allclose(c.derivative(u), fd, rtol=1e-8)


# -------------------------------------------------------------- elements

def line(y0, scale_index=None, n=1):
    """Horizontal segment from (0, y0) to (1, y0), optionally scaled by p[k]."""
    if scale_index is None:
        return CurveBinding.from_points(1, [0, 0, 1, 1], [[0, y0], [1, y0]])
    e = np.zeros(n)
    e[scale_index] = 1.0
    pts = [PointBinding.affine([0, 0], [0 * e, y0 * e]), PointBinding.affine([0, 0], [e, y0 * e])]
    return CurveBinding.from_points(1, [0, 0, 1, 1], pts)


IDENTITY = DesignElement(line(1.0), line(0.0), "identity")


def test_identity_element():
    X, Y = np.meshgrid(np.linspace(0, 1, 5), np.linspace(0, 1, 5))
    np.testing.assert_allclose(de_map(IDENTITY, X.ravel(), Y.ravel(), [1.0]),
                               np.column_stack([X.ravel(), Y.ravel()]), atol=1e-15)
    J, dJ = de_jacobian(IDENTITY, 0.3, 0.6, np.array([1.0]))
    np.testing.assert_allclose(J, np.eye(2), atol=1e-15)
    assert np.linalg.det(J) == pytest.approx(1.0)
    assert np.all(dJ == 0)


@pytest.mark.parametrize("s", [0.5, 2.0, 3.0])
def test_scaled_element_determinant(s):
    el = DesignElement(line(1.0, 0), line(0.0, 0))
    J, dJ = de_jacobian(el, 0.4, 0.2, np.array([s]))
    assert np.linalg.det(J) == pytest.approx(s * s, rel=1e-14)
    np.testing.assert_allclose(dJ[0], np.eye(2), atol=1e-14)


def test_folded_element_reported():
    el = DesignElement(line(0.0), line(1.0))      # curves swapped: orientation reversed
    with pytest.raises(GeometryError, match="determinant"):
        de_jacobian(el, 0.4, 0.2, np.array([1.0]))


def test_map_rejects_outside_square():
    with pytest.raises(ValueError):
        de_map(IDENTITY, 1.2, 0.5, [1.0])


@pytest.fixture(scope="module")
def elements():
    return geo.design_elements(10.5)


def test_blend_endpoints(elements):
    el = elements[0]
    p = geo.P_REF
    np.testing.assert_allclose(de_map(el, 0.3, 1.0, p), el.curve1.curve(p).evaluate(0.3))
    np.testing.assert_allclose(de_map(el, 0.3, 0.0, p), el.curve2.curve(p).evaluate(0.3))


def test_circle_ellipse_element_midpoint():
    p = np.array([5.1, 16.0, 14.5, 9.5])
    c1 = geo.circle_binding(0, 4, geo.MM)
    c2 = geo.ellipse_binding(1, 2, 4, 10.5 * geo.MM, geo.MM)
    el = DesignElement(c1, c2)
    mid = 0.5 * (circle_arc(5.1e-3).evaluate(0.5) + ellipse_arc(16e-3, 14.5e-3, 10.5e-3).evaluate(0.5))
    np.testing.assert_allclose(de_map(el, 0.5, 0.5, p), mid, rtol=1e-14)


@pytest.mark.parametrize("k", range(8))
def test_round_trip(elements, k):
    el = elements[k]
    g = np.linspace(0.05, 0.95, 7)
    X, Y = np.meshgrid(g, g)
    uv = np.column_stack([X.ravel(), Y.ravel()])
    pts = de_map(el, uv[:, 0], uv[:, 1], geo.P_REF)
    np.testing.assert_allclose(de_invert(el, pts, geo.P_REF), uv, atol=1e-10)
    np.testing.assert_allclose(de_invert(el, de_map(el, 0.3, 0.7, geo.P_REF), geo.P_REF),
                               [0.3, 0.7], atol=1e-10)


def test_corner_preimage(elements):
    el = elements[0]
    np.testing.assert_allclose(de_invert(el, el.curve2.curve(geo.P_REF).evaluate(0.0), geo.P_REF),
                               [0, 0], atol=1e-10)


def test_invert_rejects_far_point(elements):
    with pytest.raises(GeometryError, match="no preimage"):
        de_invert(elements[0], [0.025, 0.02], geo.P_REF)


@pytest.mark.parametrize("k", range(8))
def test_parameter_derivatives_match_differences(elements, k, rng):
    el = elements[k]
    uv = rng.uniform(0.05, 0.95, (5, 2))
    p = geo.P_REF + rng.uniform(-0.5, 0.5, 4)
    df, dJ = el.param_derivatives(uv[:, 0], uv[:, 1], p)
    for i in range(4):
        h = 1e-6 * max(abs(p[i]), 1.0)
        e = np.zeros(4)
        e[i] = h
        fd = (el.map(uv[:, 0], uv[:, 1], p + e) - el.map(uv[:, 0], uv[:, 1], p - e)) / (2 * h)
        fdJ = (el.jacobian(uv[:, 0], uv[:, 1], p + e)
               - el.jacobian(uv[:, 0], uv[:, 1], p - e)) / (2 * h)
        scale = max(np.abs(df).max(), 1e-6)
        assert np.abs(df[i] - fd).max() <= 1e-6 * scale
        assert np.abs(dJ[i] - fdJ).max() <= 1e-6 * max(np.abs(dJ).max(), 1e-3)


# ---------------------------------------------------------- mesh motion

@pytest.fixture(scope="module")
def dem(elements):
    mesh = load_mesh(asset_path(DE_MESH_ASSET))
    return DesignElementMap(mesh, elements, geo.ELEMENT_TAGS, geo.P_REF)


def test_reference_deformation_is_identity(dem):
    m = deform_mesh(dem.mesh, dem, geo.P_REF)
    assert np.abs(m.nodes - dem.mesh.nodes).max() < 1e-12
    m2 = deform_mesh(dem.mesh, geo.design_elements(10.5), geo.P_REF, geo.ELEMENT_TAGS, geo.P_REF)
    assert np.abs(m2.nodes - dem.mesh.nodes).max() < 1e-12


def test_circle_nodes_move_radially(dem):
    x0 = dem.mesh.nodes
    r0 = np.hypot(*x0.T)
    on_circle = np.flatnonzero(np.abs(r0 - 7.05e-3) < 1e-9)
    assert on_circle.size > 5
    p = geo.P_REF + np.array([1.0, 0, 0, 0])
    x = dem.deform(p).nodes
    np.testing.assert_allclose(np.hypot(*x[on_circle].T), 8.05e-3, rtol=1e-12)
    np.testing.assert_allclose(np.arctan2(x[on_circle, 1], x[on_circle, 0]),
                               np.arctan2(x0[on_circle, 1], x0[on_circle, 0]), atol=1e-12)


def test_fixed_nodes_do_not_move(dem, rng):
    fixed = np.flatnonzero(dem.owner < 0)
    assert fixed.size > 0
    p = geo.P_REF + rng.uniform(-1, 1, 4)
    np.testing.assert_array_equal(dem.deform(p).nodes[fixed], dem.mesh.nodes[fixed])


def test_node_velocities_match_differences(dem):
    p = np.array([6.0, 17.5, 15.0, 10.0])
    _, dx = dem.node_positions(p, derivatives=True)
    for i in range(4):
        e = np.zeros(4)
        e[i] = 1e-6 * p[i]
        fd = (dem.node_positions(p + e) - dem.node_positions(p - e)) / (2 * e[i])
        assert np.abs(dx[i] - fd).max() <= 1e-6 * np.abs(dx).max()


def test_folding_is_rejected(dem):
    with pytest.raises(GeometryError, match="area"):
        dem.deform(np.array([12.0, 17.0, 15.25, 11.25]))
