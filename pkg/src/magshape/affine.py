"""Affine decomposition of parameter-dependent FE systems.

The moving part of the mesh is covered by triangular subdomains; on each the
geometry is an affine image x = A(p) xh + b(p) of a reference triangle. With
G = |A| A^-1 A^-T and the cofactor transform C = |A| A^-1,

    K(p)    = K0 + sum_l G11 Kxx + G22 Kyy + G12 Kxy + G21 Kyx
    M(p)    = M0 + sum_l |A| M^
    j_src   = j0 + sum_l |A| j^_src
    j_m     = jm0 + sum_l (C h)_x j^_mx + (C h)_y j^_my

where h is the unit in-plane direction (-H_y, H_x) of the magnetization of
the subdomain. Factors are integrated once on the reference mesh.

Subdomain vertices are smooth functions of p with analytic derivatives, so
the maps are exactly affine on each subdomain for every p.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .fem import AssembledSystem, SparsityPattern, material_arrays
from .mesh import MeshError, RegionMap, TriMesh, element_geometry

VertexFn = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


class AffineGeometryError(ValueError):
    """A subdomain map became singular or orientation-reversing."""


def affine_map(ref_triangle, cur_triangle):
    """(A, b, det A) with A @ ref_v + b = cur_v for the three vertices."""
    R = np.asarray(ref_triangle, float).reshape(3, 2)
    X = np.asarray(cur_triangle, float).reshape(3, 2)
    E = np.column_stack([R[1] - R[0], R[2] - R[0]])
    dE = np.linalg.det(E)
    if abs(dE) <= 1e-300 or abs(dE) <= 1e-14 * max(np.abs(E).max() ** 2, 1e-300):
        raise AffineGeometryError("degenerate reference triangle")
    A = np.column_stack([X[1] - X[0], X[2] - X[0]]) @ np.linalg.inv(E)
    b = X[0] - A @ R[0]
    return A, b, float(np.linalg.det(A))


def _cofactor(A):
    """C = |A| A^-1 for a stack of 2x2 matrices."""
    C = np.empty_like(A)
    C[..., 0, 0], C[..., 0, 1] = A[..., 1, 1], -A[..., 0, 1]
    C[..., 1, 0], C[..., 1, 1] = -A[..., 1, 0], A[..., 0, 0]
    return C


def thetas_from_maps(A: np.ndarray, h: np.ndarray) -> np.ndarray:
    """(L, 7) theta factors for map matrices (L, 2, 2) and directions (L, 2)."""
    det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    bad = np.flatnonzero(~(det > 0))
    if bad.size:
        raise AffineGeometryError(f"subdomain map {bad[0]} has det {det[bad[0]]:.3e} <= 0")
    C = _cofactor(A)
    G = C @ np.swapaxes(C, 1, 2) / det[:, None, None]
    ch = np.einsum("lab,lb->la", C, h)
    return np.column_stack([det, G[:, 0, 0], G[:, 1, 1], G[:, 0, 1], G[:, 1, 0],
                            ch[:, 0], ch[:, 1]])


def theta_gradients_from_maps(A: np.ndarray, dA: np.ndarray, h: np.ndarray) -> np.ndarray:
    """(L, 7, I) derivatives of :func:`thetas_from_maps`; ``dA`` is (I, L, 2, 2)."""
    det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    C = _cofactor(A)
    dC = _cofactor(dA)
    ddet = (dA[..., 0, 0] * A[:, 1, 1] + A[:, 0, 0] * dA[..., 1, 1]
            - dA[..., 0, 1] * A[:, 1, 0] - A[:, 0, 1] * dA[..., 1, 0])
    CCt = C @ np.swapaxes(C, 1, 2)
    dCCt = dC @ np.swapaxes(C, 1, 2)[None] + C[None] @ np.swapaxes(dC, 2, 3)
    dG = dCCt / det[None, :, None, None] - CCt[None] * (ddet / det**2)[..., None, None]
    dch = np.einsum("ilab,lb->ila", dC, h)
    out = np.stack([ddet, dG[..., 0, 0], dG[..., 1, 1], dG[..., 0, 1], dG[..., 1, 0],
                    dch[..., 0], dch[..., 1]], axis=-1)   # (I, L, 7)
    return np.transpose(out, (1, 2, 0))


def theta_from_A(A: np.ndarray, h: np.ndarray = (0.0, 0.0)) -> np.ndarray:
    """(theta_0, ..., theta_6) for the map matrix A and magnet direction h."""
    A = np.asarray(A, float)
    return thetas_from_maps(A[None], np.asarray(h, float).reshape(1, 2))[0]


def theta_from_A_dot(A: np.ndarray, dA: np.ndarray, h=(0.0, 0.0)) -> np.ndarray:
    """Directional derivatives of :func:`theta_from_A`; ``dA`` is (k, 2, 2)."""
    A, dA = np.asarray(A, float), np.asarray(dA, float)
    return theta_gradients_from_maps(A[None], dA[:, None], np.asarray(h, float).reshape(1, 2))[0].T


@dataclass(frozen=True)
class AffineSubdomain:
    """Reference triangle, vertex functions of p and the mesh triangles inside.

    ``vertices(p)`` returns ``(X (3, 2), dX/dp (I, 3, 2))``.
    """

    ref: np.ndarray
    vertices: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    triangles: np.ndarray

    def map(self, p):
        X, _ = self.vertices(p)
        return affine_map(self.ref, X)

    def map_and_derivative(self, p):
        X, dX = self.vertices(p)
        A, b, det = affine_map(self.ref, X)
        E = np.column_stack([self.ref[1] - self.ref[0], self.ref[2] - self.ref[0]])
        Einv = np.linalg.inv(E)
        dedges = np.stack([dX[:, 1] - dX[:, 0], dX[:, 2] - dX[:, 0]], axis=2)  # (I,2,2)
        return A, dedges @ Einv


def vertex_function(fns: Sequence[VertexFn]):
    """Bundle three point functions ``p -> (xy, dxy/dp (I, 2))``."""
    def f(p):
        vals = [fn(p) for fn in fns]
        return np.array([v for v, _ in vals]), np.stack([d for _, d in vals], axis=1)
    return f


def fixed_vertex(xy) -> VertexFn:
    xy = np.asarray(xy, float)
    return lambda p: (xy.copy(), np.zeros((len(p), 2)))


def linear_vertex(base, jac) -> VertexFn:
    """xy = base + jac @ p with ``jac`` of shape (2, I)."""
    base, jac = np.asarray(base, float), np.asarray(jac, float)
    return lambda p: (base + jac @ p, jac.T.copy())


VertexBatch = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


def stacked_vertices(subdomains: Sequence[AffineSubdomain]) -> VertexBatch:
    """Batch evaluator ``p -> (X (L,3,2), dX (I,L,3,2))`` from per-subdomain calls."""
    def f(p):
        vals = [sd.vertices(p) for sd in subdomains]
        return np.array([X for X, _ in vals]), np.stack([d for _, d in vals], axis=1)
    return f


class AffineFactors:
    """Precomputed reference factors on a global sparsity pattern.

    Stiffness factors of all subdomains are stacked as columns of one sparse
    (nnz x 4L) matrix so that K(p) data = K0 + F_K @ theta_K(p).

    ``vertices`` optionally evaluates all subdomain vertices at once (same
    result as the per-subdomain functions, faster for many subdomains).
    """

    def __init__(self, mesh: TriMesh, regions: RegionMap, subdomains: Sequence[AffineSubdomain],
                 lz: float, p_ref, vertices: VertexBatch | None = None):
        self.mesh = mesh
        self.regions = regions
        self.subdomains = tuple(subdomains)
        self.lz = float(lz)
        self.p_ref = np.asarray(p_ref, float)
        self.pattern = pat = SparsityPattern(mesh.triangles, mesh.n_nodes)
        self._vertices = vertices or stacked_vertices(self.subdomains)
        self._cache = None
        nt = mesh.n_triangles
        L = len(self.subdomains)
        owner = np.full(nt, -1)
        for l, sd in enumerate(self.subdomains):
            t = np.asarray(sd.triangles, int)
            if np.any(owner[t] >= 0):
                raise MeshError("triangle assigned to two affine subdomains")
            owner[t] = l
        self.owner = owner
        refs = np.array([np.asarray(sd.ref, float) for sd in self.subdomains]).reshape(L, 3, 2)
        E = np.stack([refs[:, 1] - refs[:, 0], refs[:, 2] - refs[:, 0]], axis=2)
        self._ref_edges_inv = np.linalg.inv(E) if L else np.zeros((0, 2, 2))

        nu, sigma, js, hx, hy = material_arrays(mesh, regions)
        p = mesh.nodes[mesh.triangles]
        area, b, c = element_geometry(p)
        # reference derivatives of hats: (dN/dxh, dN/dyh) = (b, c) / (2 area)
        gx, gy = b / (2 * area[:, None]), c / (2 * area[:, None])
        w = (nu * area / self.lz)[:, None, None]
        kxx = w * gx[:, :, None] * gx[:, None, :]
        kyy = w * gy[:, :, None] * gy[:, None, :]
        kxy = w * gx[:, :, None] * gy[:, None, :]
        kyx = w * gy[:, :, None] * gx[:, None, :]
        mass = (sigma * area / self.lz)[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12
        src = np.repeat((js * area / 3)[:, None], 3, axis=1)
        # magnetization in the plane, rotated: h = (-H_y, H_x)
        hmag = np.hypot(hx, hy)
        jmx = -(hmag * area)[:, None] * gx
        jmy = -(hmag * area)[:, None] * gy
        fixed = owner < 0
        self.K0 = pat.data(np.where(fixed[:, None, None], kxx + kyy, 0.0))
        self.M0 = pat.data(np.where(fixed[:, None, None], mass, 0.0))
        self.j0 = pat.vector(np.where(fixed[:, None], src, 0.0))
        jm_fixed = -0.5 * (hx[:, None] * c - hy[:, None] * b)
        self.jm0 = pat.vector(np.where(fixed[:, None], jm_fixed, 0.0))

        self.h_dir = np.zeros((L, 2))
        mov = np.flatnonzero(~fixed)
        hs = np.column_stack([-hy, hx])
        for l in range(L):
            t = np.asarray(self.subdomains[l].triangles, int)
            mag = hmag[t] > 0
            if np.any(mag):
                dirs = hs[t][mag] / hmag[t][mag][:, None]
                if np.ptp(dirs, axis=0).max() > 1e-12:
                    raise MeshError(f"subdomain {l}: magnetization direction not uniform")
                self.h_dir[l] = dirs[0]
        scat = pat.scatter.reshape(nt, 9)[mov].ravel()
        own = np.repeat(owner[mov], 9)
        blocks = [ke[mov].ravel() for ke in (kxx, kyy, kxy, kyx)]
        self.FK = sp.csr_matrix(
            (np.concatenate(blocks),
             (np.tile(scat, 4), np.concatenate([4 * own + q for q in range(4)]))),
            shape=(pat.nnz, 4 * L))
        self.FM = sp.csr_matrix((mass[mov].ravel(), (scat, own)), shape=(pat.nnz, L))
        vnodes = mesh.triangles[mov].ravel()
        vown = np.repeat(owner[mov], 3)
        self.FV = sp.csr_matrix(
            (np.concatenate([src[mov].ravel(), jmx[mov].ravel(), jmy[mov].ravel()]),
             (np.tile(vnodes, 3), np.concatenate([3 * vown + q for q in range(3)]))),
            shape=(mesh.n_nodes, 3 * L))
        for F in (self.FK, self.FM, self.FV):
            F.sum_duplicates()

        # barycentric coordinates of moving nodes in their subdomain's reference triangle
        self._node_sd = np.full(mesh.n_nodes, -1)
        self._node_sd[mesh.triangles[mov].ravel()] = np.repeat(owner[mov], 3)
        self._moving = np.flatnonzero(self._node_sd >= 0)
        l_of = self._node_sd[self._moving]
        lam = np.einsum("nab,nb->na", self._ref_edges_inv[l_of],
                        mesh.nodes[self._moving] - refs[l_of, 0])
        self._bary = np.column_stack([1 - lam.sum(1), lam])

    @property
    def n_params(self) -> int:
        return self.p_ref.size

    def _vertex_data(self, p):
        p = np.asarray(p, float)
        if self._cache is None or not np.array_equal(self._cache[0], p):
            X, dX = self._vertices(p)
            self._cache = (p.copy(), np.asarray(X, float), np.asarray(dX, float))
        return self._cache[1], self._cache[2]

    def maps(self, p):
        """Map matrices A (L, 2, 2) and dA/dp (I, L, 2, 2)."""
        X, dX = self._vertex_data(p)
        D = np.stack([X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]], axis=2)
        dD = np.stack([dX[:, :, 1] - dX[:, :, 0], dX[:, :, 2] - dX[:, :, 0]], axis=3)
        return D @ self._ref_edges_inv, dD @ self._ref_edges_inv[None]

    def thetas(self, p) -> np.ndarray:
        """(L, 7) theta factors of all subdomains."""
        return thetas_from_maps(self.maps(p)[0], self.h_dir)

    def theta_gradients(self, p) -> np.ndarray:
        """(L, 7, I) derivatives of the theta factors."""
        A, dA = self.maps(p)
        thetas_from_maps(A, self.h_dir)  # validity check
        return theta_gradients_from_maps(A, dA, self.h_dir)

    def assemble(self, p) -> AssembledSystem:
        p = np.asarray(p, float)
        th = self.thetas(p)
        # the xy/yx factors enter in different summation orders; symmetrizing
        # removes the roundoff asymmetry
        K = self.pattern.symmetrize(self.K0 + self.FK @ th[:, 1:5].ravel())
        M = self.M0 + self.FM @ th[:, 0]
        src = self.j0 + self.FV[:, 0::3] @ th[:, 0]
        jm = self.jm0 + self.FV[:, 1::3] @ th[:, 5] + self.FV[:, 2::3] @ th[:, 6]
        pat = self.pattern
        return AssembledSystem(self.mesh_at(p), pat.matrix(K), pat.matrix(M),
                               np.asarray(src).ravel(), np.asarray(jm).ravel(), self.lz)

    def derivatives(self, p):
        """List over i of (dK/dp_i csr, d(j_src + j_m)/dp_i)."""
        dth = self.theta_gradients(np.asarray(p, float))  # (L,7,I)
        out = []
        for i in range(self.n_params):
            d = dth[:, :, i]
            dK = self.pattern.symmetrize(self.FK @ d[:, 1:5].ravel())
            dj = (self.FV[:, 0::3] @ d[:, 0] + self.FV[:, 1::3] @ d[:, 5]
                  + self.FV[:, 2::3] @ d[:, 6])
            out.append((self.pattern.matrix(dK), np.asarray(dj).ravel()))
        return out

    def node_positions(self, p, derivatives: bool = False):
        """Vertex-moved mesh nodes (and dx/dp, shape (I, n, 2))."""
        p = np.asarray(p, float)
        X, dX = self._vertex_data(p)
        x = self.mesh.nodes.copy()
        l_of = self._node_sd[self._moving]
        x[self._moving] = np.einsum("nk,nkd->nd", self._bary, X[l_of])
        if not derivatives:
            return x
        dx = np.zeros((p.size,) + x.shape)
        dx[:, self._moving] = np.einsum("nk,inkd->ind", self._bary, dX[:, l_of])
        return x, dx

    def mesh_at(self, p) -> TriMesh:
        return self.mesh.with_nodes(self.node_positions(p))


def theta(factors: AffineFactors, p, l: int) -> np.ndarray:
    return theta_from_A(factors.subdomains[l].map(np.asarray(p, float))[0], factors.h_dir[l])


def theta_gradient(factors: AffineFactors, p, l: int) -> np.ndarray:
    """(7, I) derivatives of theta for subdomain ``l``."""
    A, dA = factors.subdomains[l].map_and_derivative(np.asarray(p, float))
    theta_from_A(A, factors.h_dir[l])
    return theta_from_A_dot(A, dA, factors.h_dir[l]).T


def assemble_affine(factors: AffineFactors, p) -> AssembledSystem:
    return factors.assemble(p)
