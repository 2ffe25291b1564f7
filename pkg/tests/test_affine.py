import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from magshape.affine import (AffineFactors, AffineGeometryError, affine_map, assemble_affine,
                             theta, theta_from_A, theta_from_A_dot, theta_gradient)
from magshape.fem import assemble_direct
from magshape.mesh import Material, RegionMap
from magshape.problems import toy
from magshape.problems.die_press import DiePressConfig
from magshape.problems.die_press_affine import affine_factors

REF = np.array([[0, 0], [1, 0], [0, 1]], float)


def rel_fro(A, B):
    A, B = sp.csr_matrix(A), sp.csr_matrix(B)
    return sp.linalg.norm(A - B) / sp.linalg.norm(B)


def rel_vec(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_affine_map_examples():
    A, b, det = affine_map(REF, REF)
    np.testing.assert_allclose(A, np.eye(2))
    np.testing.assert_allclose(b, 0)
    assert det == 1
    A, _, det = affine_map(REF, 2 * REF)
    np.testing.assert_allclose(A, 2 * np.eye(2))
    assert det == 4
    A, b, det = affine_map(REF, [[1, 1], [3, 1], [1, 4]])
    np.testing.assert_allclose(A, [[2, 0], [0, 3]])
    np.testing.assert_allclose(b, [1, 1])
    assert det == pytest.approx(6)


def test_affine_map_rejects_degenerate_reference():
    with pytest.raises(AffineGeometryError):
        affine_map([[0, 0], [1, 1], [2, 2]], REF)


@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_affine_map_matches_vertices(v):
    X = np.array(v).reshape(3, 2)
    A, b, _ = affine_map(REF, X)
    np.testing.assert_allclose(REF @ A.T + b, X, atol=1e-12)


def test_theta_examples():
    np.testing.assert_allclose(theta_from_A(np.eye(2), (0, 1)), [1, 1, 1, 0, 0, 0, 1])
    np.testing.assert_allclose(theta_from_A(2.5 * np.eye(2)), [6.25, 1, 1, 0, 0, 0, 0])
    np.testing.assert_allclose(theta_from_A(np.diag([2.0, 3.0])), [6, 1.5, 2 / 3, 0, 0, 0, 0])


def test_theta_rejects_singular_or_reflected_maps():
    for A in (np.zeros((2, 2)), np.diag([1.0, -1.0])):
        with pytest.raises(AffineGeometryError):
            theta_from_A(A)


@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4),
       st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_theta_derivative_matches_differences(a, d):
    A = np.eye(2) * 2 + np.array(a).reshape(2, 2) * 0.5
    if np.linalg.det(A) < 0.5:
        return
    dA = np.array(d).reshape(1, 2, 2)
    h = 1e-6
    fd = (theta_from_A(A + h * dA[0], (0.6, 0.8)) - theta_from_A(A - h * dA[0], (0.6, 0.8))) / (2 * h)
    np.testing.assert_allclose(theta_from_A_dot(A, dA, (0.6, 0.8))[0], fd, atol=1e-7)
    th = theta_from_A(A)
    assert th[3] == th[4]           # G symmetric


def test_constant_vertices_give_zero_theta_gradient():
    np.testing.assert_array_equal(theta_from_A_dot(np.eye(2), np.zeros((3, 2, 2))), 0)


@pytest.fixture(scope="module")
def toy_f():
    return toy.toy_factors(32)


@pytest.fixture(scope="module")
def die_f():
    return affine_factors(DiePressConfig())


def direct(F, p):
    return assemble_direct(F.mesh_at(p), F.regions, F.lz)


def check_equivalence(F, p, tol):
    a, d = assemble_affine(F, p), direct(F, p)
    assert rel_fro(a.K, d.K) <= tol
    if sp.linalg.norm(d.M) > 0:
        assert rel_fro(a.M, d.M) <= tol
    for u, v in ((a.j_src, d.j_src), (a.j_m, d.j_m)):
        if np.linalg.norm(v) > 0:
            assert rel_vec(u, v) <= tol


def test_reference_assembly_matches_direct(toy_f, die_f):
    check_equivalence(toy_f, toy.P_REF, 1e-14)
    check_equivalence(die_f, die_f.p_ref, 1e-14)


def test_random_assembly_matches_direct(toy_f, die_f, rng):
    for F, lo, up in ((toy_f, toy.LOWER_MM, toy.UPPER_MM),
                      (die_f, (5.1, 16, 14.5, 9.5), (9, 18, 16, 13))):
        for _ in range(5):
            check_equivalence(F, rng.uniform(lo, up), 1e-12)


def test_stiffness_symmetric(die_f):
    K = assemble_affine(die_f, [6.0, 17.5, 15.5, 12.0]).K
    assert abs(K - K.T).max() == 0.0


def test_mass_scales_with_uniform_stretch():
    regions = RegionMap({toy.AIR: Material.relative(1.0, sigma=5e6),
                         toy.MAGNET: Material.relative(1.0, sigma=1e6)})
    F = toy.toy_factors(8, regions=regions)
    s = 1.3
    M_ref = assemble_affine(F, toy.P_REF).M
    M = assemble_affine(F, s * toy.P_REF).M
    assert rel_fro(M, s * s * M_ref) <= 1e-14
    for l in range(2):
        assert theta(F, s * toy.P_REF, l)[0] == pytest.approx(s * s, rel=1e-14)


def test_theta_gradient_vs_differences(toy_f, die_f):
    for F, p in ((toy_f, np.array([12.0, 4.0])), (die_f, np.array([6.0, 17.5, 15.0, 10.0]))):
        for l in range(0, len(F.subdomains), max(1, len(F.subdomains) // 7)):
            g = theta_gradient(F, p, l)
            for i in range(p.size):
                e = np.zeros(p.size)
                e[i] = 1e-6 * p[i]
                fd = (theta(F, p + e, l) - theta(F, p - e, l)) / (2 * e[i])
                np.testing.assert_allclose(g[:, i], fd, rtol=1e-6, atol=1e-9)
            np.testing.assert_allclose(F.theta_gradients(p)[l], g, rtol=1e-12, atol=1e-15)


def test_untouched_subdomains_have_zero_gradient(die_f):
    A, dA = die_f.maps(die_f.p_ref)
    untouched = np.flatnonzero(np.abs(dA[1]).reshape(len(A), -1).max(1) == 0)
    assert untouched.size > 0
    assert np.all(die_f.theta_gradients(die_f.p_ref)[untouched, :, 1] == 0)


def test_stiffness_derivative_vs_differences(toy_f, die_f):
    for F, p in ((toy_f, np.array([12.0, 4.0])), (die_f, np.array([6.0, 17.5, 15.0, 10.0]))):
        derivs = F.derivatives(p)
        for i, (dK, dj) in enumerate(derivs):
            e = np.zeros(p.size)
            e[i] = 1e-6 * p[i]
            Kp, Km = F.assemble(p + e), F.assemble(p - e)
            fd = (Kp.K - Km.K) / (2 * e[i])
            assert rel_fro(dK, fd) <= 1e-6
            fdj = (Kp.rhs - Km.rhs) / (2 * e[i])
            if np.linalg.norm(fdj) > 0:
                assert rel_vec(dj, fdj) <= 1e-6


def test_invalid_geometry_rejected(toy_f):
    with pytest.raises(AffineGeometryError):
        assemble_affine(toy_f, [-1.0, 6.0])
