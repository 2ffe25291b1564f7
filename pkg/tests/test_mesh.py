import numpy as np
import pytest
from hypothesis import given, strategies as st

from magshape.mesh import (MeshError, TriMesh, format_mesh, load_mesh, locate_points,
                           parse_mesh, rectangle_mesh, triangle_geometry)
from magshape.problems.die_press import AFFINE_MESH_ASSET, DE_MESH_ASSET, asset_path

from oracles import hat_gradients

UNIT = """# unit right triangle
NODES 3
0 0
1 0
0 1
TRIANGLES 1
0 {order} 1
BOUNDARY 3
0 1 1
1 2 2
2 0 3
"""


def one_triangle(order="1 2"):
    return parse_mesh(UNIT.format(order=order))


def test_unit_triangle_loads():
    m = one_triangle()
    assert (m.n_nodes, m.n_triangles) == (3, 1)
    assert m.areas()[0] == 0.5


def test_clockwise_triangle_is_reoriented():
    m = one_triangle("2 1")
    assert m.areas()[0] == 0.5
    np.testing.assert_array_equal(m.triangles[0], [0, 1, 2])


@pytest.mark.parametrize("text, where", [
    ("NODES 2\n0 0\n1 0\nTRIANGLES 1\n0 1 5 1\n", "line 5"),
    ("NODES 3\n0 0\n1 0\n2 0\nTRIANGLES 1\n0 1 2 1\n", "line 6"),
    ("NODES 3\n0 0\n1 x\n0 1\nTRIANGLES 1\n0 1 2 1\n", "line 3"),
    ("NODES 3\n0 0\n1 0\n0 1\nTRIANGLES 1\n0 1 1\n", "line 6"),
])
def test_malformed_files_report_line(text, where):
    with pytest.raises(MeshError, match=where):
        parse_mesh(text)


def test_unit_triangle_gradients():
    area, b, c = triangle_geometry(one_triangle(), 0)
    grads = np.column_stack([b, c]) / (2 * area)
    assert area == 0.5
    np.testing.assert_allclose(grads, [[-1, -1], [1, 0], [0, 1]], atol=1e-15)


def test_scaled_triangle():
    m = one_triangle()
    m2 = m.with_nodes(2 * m.nodes)
    a1, b1, c1 = triangle_geometry(m, 0)
    a2, b2, c2 = triangle_geometry(m2, 0)
    assert a2 == 4 * a1
    np.testing.assert_allclose(np.column_stack([b2, c2]) / (2 * a2),
                               0.5 * np.column_stack([b1, c1]) / (2 * a1))


def test_arbitrary_triangle_against_oracle():
    V = np.array([[0, 0], [2, 0], [1, 3]], float)
    m = TriMesh(V, [[0, 1, 2]], [1])
    area, b, c = triangle_geometry(m, 0)
    ref_area, ref_grad = hat_gradients(V)
    assert area == pytest.approx(3.0, abs=1e-15) and ref_area == pytest.approx(3.0)
    np.testing.assert_allclose(np.column_stack([b, c]) / (2 * area), ref_grad, atol=1e-14)


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=6, max_size=6))
def test_hat_gradients_partition_of_unity(xy):
    V = np.array(xy).reshape(3, 2)
    e1, e2 = V[1] - V[0], V[2] - V[0]
    a = 0.5 * (e1[0] * e2[1] - e1[1] * e2[0])
    if abs(a) < 1e-3:
        return
    m = TriMesh(V if a > 0 else V[[0, 2, 1]], [[0, 1, 2]], [1])
    area, b, c = triangle_geometry(m, 0)
    scale = np.abs(V).max() + 1
    assert abs(b.sum()) <= 1e-14 * scale and abs(c.sum()) <= 1e-14 * scale
    _, ref = hat_gradients(m.nodes)
    np.testing.assert_allclose(np.column_stack([b, c]) / (2 * area), ref,
                               atol=1e-9 * scale / abs(a))


@pytest.mark.parametrize("name", [DE_MESH_ASSET, AFFINE_MESH_ASSET])
def test_assets_match_headers_and_domain(name):
    path = asset_path(name)
    text = path.read_text()
    counts = {ln.split()[0]: int(ln.split()[1]) for ln in text.splitlines()
              if ln.split() and ln.split()[0] in ("NODES", "TRIANGLES", "BOUNDARY")}
    m = load_mesh(path)
    assert (m.n_nodes, m.n_triangles, len(m.boundary_edges)) == \
        (counts["NODES"], counts["TRIANGLES"], counts["BOUNDARY"])
    assert np.all(m.areas() > 0)
    assert m.areas().sum() == pytest.approx(30e-3 * 25e-3, rel=1e-10)
    assert set(m.boundary_labels.tolist()) == {1, 2, 3, 4}


def test_format_round_trip():
    m = rectangle_mesh(3, 2, 0, 2, 0, 1)
    m2 = parse_mesh(format_mesh(m, "two lines\nof comment"))
    np.testing.assert_array_equal(m2.nodes, m.nodes)
    np.testing.assert_array_equal(m2.triangles, m.triangles)
    np.testing.assert_array_equal(m2.boundary_labels, m.boundary_labels)


def test_rectangle_mesh_area_and_labels():
    m = rectangle_mesh(4, 3, 0, 2, 0, 1.5)
    assert m.n_triangles == 24
    assert m.areas().sum() == pytest.approx(3.0, rel=1e-14)
    np.testing.assert_array_equal(m.boundary_nodes(4), [0, 5, 10, 15])


def test_locate_points():
    m = rectangle_mesh(4, 4)
    t = locate_points(m, [[0.3, 0.6], [1.0, 1.0]])
    for q, k in zip([[0.3, 0.6], [1.0, 1.0]], t):
        P = m.nodes[m.triangles[k]]
        lam = np.linalg.solve(np.vstack([P.T, np.ones(3)]), [*q, 1.0])
        assert np.all(lam >= -1e-12)
    with pytest.raises(MeshError, match="outside"):
        locate_points(m, [[1.5, 0.5]])


def test_mesh_is_immutable():
    m = rectangle_mesh(1, 1)
    with pytest.raises(ValueError):
        m.nodes[0, 0] = 1.0
