"""Linear-triangle assembly and solution of the 2D magnetostatic problem.

Degrees of freedom multiply the edge functions w_j = N_j / l_z e_z, so a dof
carries l_z times the nodal value of A_z. The length l_z is passed explicitly
everywhere; flux densities come out independent of it.

Element integrals (per triangle, hat functions N_i)::

    K_ij = nu / (4 A l_z) (b_i b_j + c_i c_j)
    M_ij = sigma A / (12 l_z) (1 + delta_ij)
    j_src_i = J A / 3
    j_m_i = -(H_x c_i - H_y b_i) / 2
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .ledger import Ledger
from .mesh import RegionMap, TriMesh, element_geometry, locate_points

RESIDUAL_TOL = 1e-10
_MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12.0


class SolverError(RuntimeError):
    pass


class SparsityPattern:
    """CSR pattern of a triangle connectivity with a scatter map.

    Element matrices (nt, 3, 3) are summed into CSR data with ``np.bincount``,
    so results are bitwise reproducible and any number of matrices assembled
    on the same connectivity share indices.
    """

    def __init__(self, triangles: np.ndarray, n_nodes: int):
        tris = np.asarray(triangles, dtype=np.int64)
        rows = np.repeat(tris, 3, axis=1).ravel()
        cols = np.tile(tris, (1, 3)).ravel()
        keys = rows * n_nodes + cols
        ukeys, self.scatter = np.unique(keys, return_inverse=True)
        self.n = n_nodes
        self.nnz = len(ukeys)
        self.indices = (ukeys % n_nodes).astype(np.int32)
        urows = ukeys // n_nodes
        self.indptr = np.searchsorted(urows, np.arange(n_nodes + 1)).astype(np.int32)
        self.triangles = tris
        # position of entry (j, i) for every stored entry (i, j)
        self.transpose = np.searchsorted(ukeys, self.indices.astype(np.int64) * n_nodes + urows)

    def data(self, elem: np.ndarray) -> np.ndarray:
        return np.bincount(self.scatter, weights=elem.reshape(-1), minlength=self.nnz)

    def symmetrize(self, data: np.ndarray) -> np.ndarray:
        """(D + D') / 2 on the pattern; the result is exactly symmetric."""
        return 0.5 * (data + data[self.transpose])

    def matrix(self, data: np.ndarray) -> sp.csr_matrix:
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def vector(self, elem_vec: np.ndarray) -> np.ndarray:
        return np.bincount(self.triangles.ravel(), weights=elem_vec.reshape(-1),
                           minlength=self.n)


def stiffness_elements(p, nu, lz):
    area, b, c = element_geometry(p)
    s = (nu / (4.0 * area * lz))[:, None, None]
    return s * (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :])


def mass_elements(p, sigma, lz):
    area, _, _ = element_geometry(p)
    return (sigma * area / lz)[:, None, None] * _MASS_REF


def source_elements(p, j_src):
    area, _, _ = element_geometry(p)
    return np.repeat((j_src * area / 3.0)[:, None], 3, axis=1)


def magnet_elements(p, hx, hy):
    _, b, c = element_geometry(p)
    return -0.5 * (hx[:, None] * c - hy[:, None] * b)


def _geometry_dot(p, dp):
    """Directional derivatives of (area, b, c) for vertex velocity ``dp``."""
    area, b, c = element_geometry(p)
    _, db, dc = element_geometry(dp)  # b, c are linear in coordinates
    darea = 0.5 * (db[:, 0] * c[:, 1] + b[:, 0] * dc[:, 1]
                   - db[:, 1] * c[:, 0] - b[:, 1] * dc[:, 0])
    return area, b, c, darea, db, dc


def stiffness_elements_dot(p, dp, nu, lz):
    area, b, c, da, db, dc = _geometry_dot(p, dp)
    outer = b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]
    douter = (db[:, :, None] * b[:, None, :] + b[:, :, None] * db[:, None, :]
              + dc[:, :, None] * c[:, None, :] + c[:, :, None] * dc[:, None, :])
    s = (nu / (4.0 * lz))[:, None, None]
    return s * (douter / area[:, None, None] - outer * (da / area**2)[:, None, None])


def mass_elements_dot(p, dp, sigma, lz):
    _, _, _, da, _, _ = _geometry_dot(p, dp)
    return (sigma * da / lz)[:, None, None] * _MASS_REF


def source_elements_dot(p, dp, j_src):
    _, _, _, da, _, _ = _geometry_dot(p, dp)
    return np.repeat((j_src * da / 3.0)[:, None], 3, axis=1)


def magnet_elements_dot(p, dp, hx, hy):
    _, db, dc = element_geometry(dp)
    return -0.5 * (hx[:, None] * dc - hy[:, None] * db)


@dataclass(frozen=True)
class AssembledSystem:
    """K a + M da/dt = j_src + j_m, with optional Dirichlet data.

    ``dirichlet`` maps dof index -> prescribed dof value (already scaled by l_z).
    """

    mesh: TriMesh
    K: sp.csr_matrix
    M: sp.csr_matrix
    j_src: np.ndarray
    j_m: np.ndarray
    lz: float
    dirichlet_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    dirichlet_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def rhs(self) -> np.ndarray:
        return self.j_src + self.j_m

    @property
    def n_dof(self) -> int:
        return self.K.shape[0]

    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_dof, bool)
        mask[self.dirichlet_dofs] = False
        return np.flatnonzero(mask)


def material_arrays(mesh: TriMesh, regions: RegionMap):
    return regions.per_triangle(mesh.regions)


def assemble_direct(mesh: TriMesh, regions: RegionMap, lz: float = 1.0,
                    pattern: SparsityPattern | None = None) -> AssembledSystem:
    """Element-wise assembly on the given (possibly deformed) mesh."""
    if not lz > 0:
        raise ValueError("device length l_z must be positive")
    nu, sigma, js, hx, hy = material_arrays(mesh, regions)
    p = mesh.nodes[mesh.triangles]
    pat = pattern or SparsityPattern(mesh.triangles, mesh.n_nodes)
    K = pat.matrix(pat.data(stiffness_elements(p, nu, lz)))
    M = pat.matrix(pat.data(mass_elements(p, sigma, lz)))
    j_src = pat.vector(source_elements(p, js))
    j_m = pat.vector(magnet_elements(p, hx, hy))
    return AssembledSystem(mesh, K, M, j_src, j_m, lz)


def apply_dirichlet(system: AssembledSystem,
                    conditions: Mapping[int, Callable[[np.ndarray, np.ndarray], np.ndarray] | float]
                    ) -> AssembledSystem:
    """Prescribe A_z on labelled boundaries.

    ``conditions`` maps a boundary label to a constant or to ``f(x, y)``
    returning A_z (T m). Elimination happens in :func:`solve`, which keeps the
    reduced matrix symmetric.
    """
    mesh = system.mesh
    dofs, vals = [], []
    for label, value in conditions.items():
        nodes = mesh.boundary_nodes(label)
        x, y = mesh.nodes[nodes].T
        v = value(x, y) if callable(value) else np.full(len(nodes), float(value))
        dofs.append(nodes)
        vals.append(np.asarray(v, float) * system.lz)
    dofs = np.concatenate(dofs) if dofs else np.zeros(0, np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    # later labels win at shared corner nodes
    order = np.arange(len(dofs))[::-1]
    udofs, first = np.unique(dofs[order], return_index=True)
    return replace(system, dirichlet_dofs=udofs, dirichlet_values=vals[order][first])


@dataclass(frozen=True)
class FieldSolution:
    mesh: TriMesh
    a: np.ndarray
    lz: float
    residual: float = 0.0

    @property
    def az(self) -> np.ndarray:
        """Nodal values of A_z (T m)."""
        return self.a / self.lz


class Factorization:
    """Reduced (free-dof) stiffness matrix, factorized once.

    Further right-hand sides, e.g. sensitivity systems, reuse the factors and
    are counted as back substitutions.
    """

    def __init__(self, system: AssembledSystem, method: str = "direct",
                 ledger: Ledger | None = None):
        if len(system.dirichlet_dofs) == 0:
            raise SolverError("no Dirichlet dofs: stiffness matrix is singular "
                              "(constant nullspace)")
        self.system = system
        self.free = system.free_dofs()
        self.ledger = ledger
        self.method = method
        K = system.K
        self.K_ff = K[self.free][:, self.free].tocsc()
        self.K_fd = K[self.free][:, system.dirichlet_dofs]
        if method == "direct":
            try:
                self._lu = spla.splu(self.K_ff)
            except RuntimeError as exc:
                raise SolverError(f"factorization failed: {exc}") from exc
        elif method == "cg":
            d = self.K_ff.diagonal()
            if np.any(d <= 0):
                raise SolverError("nonpositive diagonal: system is not SPD")
            self._precond = spla.LinearOperator(self.K_ff.shape, matvec=lambda v: v / d)
        else:
            raise ValueError(f"unknown solver method {method!r}")
        if ledger is not None:
            ledger.bump("fe_solves")

    def _solve_reduced(self, b):
        if self.method == "direct":
            x = self._lu.solve(b)
        else:
            x, info = spla.cg(self.K_ff, b, rtol=1e-12, atol=0.0,
                              M=self._precond, maxiter=20 * len(b))
            if info != 0:
                raise SolverError(f"conjugate gradients did not converge (info={info})")
        if not np.all(np.isfinite(x)):
            raise SolverError("non-finite solution")
        res = np.linalg.norm(self.K_ff @ x - b)
        scale = np.linalg.norm(b)
        if res > RESIDUAL_TOL * max(scale, np.finfo(float).tiny):
            raise SolverError(f"residual {res:.3e} exceeds {RESIDUAL_TOL}*|rhs|")
        return x, res / scale if scale > 0 else 0.0

    def solve_field(self) -> FieldSolution:
        s = self.system
        a = np.zeros(s.n_dof)
        a[s.dirichlet_dofs] = s.dirichlet_values
        b = s.rhs[self.free] - self.K_fd @ s.dirichlet_values
        a[self.free], rel = self._solve_reduced(b)
        return FieldSolution(s.mesh, a, s.lz, rel)

    def solve_homogeneous(self, rhs: np.ndarray) -> tuple[np.ndarray, float]:
        """Solve K x = rhs on free dofs with x = 0 on Dirichlet dofs."""
        x = np.zeros(self.system.n_dof)
        b = rhs[self.free]
        if np.any(b):
            x[self.free], rel = self._solve_reduced(b)
        else:
            rel = 0.0
        if self.ledger is not None:
            self.ledger.bump("back_substitutions")
        return x, rel


def solve(system: AssembledSystem, method: str = "direct",
          ledger: Ledger | None = None) -> FieldSolution:
    return Factorization(system, method, ledger).solve_field()


def flux_in_triangles(mesh: TriMesh, a: np.ndarray, lz: float, tris) -> np.ndarray:
    """Piecewise-constant B = (dA_z/dy, -dA_z/dx) in the given triangles."""
    tris = np.atleast_1d(tris)
    p = mesh.nodes[mesh.triangles[tris]]
    area, b, c = element_geometry(p)
    av = a[mesh.triangles[tris]] / lz
    dadx = (b * av).sum(1) / (2 * area)
    dady = (c * av).sum(1) / (2 * area)
    return np.stack([dady, -dadx], axis=1)


def flux_in_triangles_dot(mesh: TriMesh, a: np.ndarray, lz: float, tris,
                          dx: np.ndarray) -> np.ndarray:
    """Derivative of :func:`flux_in_triangles` along node velocities ``dx``.

    ``dx`` has shape (I, n_nodes, 2); dofs ``a`` are held fixed. Returns
    (I, len(tris), 2).
    """
    tris = np.atleast_1d(tris)
    idx = mesh.triangles[tris]
    p = mesh.nodes[idx]
    av = a[idx] / lz
    out = np.empty((dx.shape[0], len(tris), 2))
    for i in range(dx.shape[0]):
        area, b, c, da, db, dc = _geometry_dot(p, dx[i][idx])
        bx = (c * av).sum(1) / (2 * area)
        by = -(b * av).sum(1) / (2 * area)
        out[i, :, 0] = (dc * av).sum(1) / (2 * area) - bx * da / area
        out[i, :, 1] = -(db * av).sum(1) / (2 * area) - by * da / area
    return out


def flux_density(solution: FieldSolution, point) -> np.ndarray:
    t = locate_points(solution.mesh, [point])[0]
    return flux_in_triangles(solution.mesh, solution.a, solution.lz, [t])[0]


def flux_operator(mesh: TriMesh, lz: float, tris) -> np.ndarray:
    """Dense (len(tris), 2, n_dof) map from dofs to B in the given triangles.

    Only 3 columns per row are nonzero; kept dense because the number of
    sample triangles is small.
    """
    tris = np.atleast_1d(tris)
    p = mesh.nodes[mesh.triangles[tris]]
    area, b, c = element_geometry(p)
    G = np.zeros((len(tris), 2, mesh.n_nodes))
    for k, t in enumerate(tris):
        idx = mesh.triangles[t]
        G[k, 0, idx] += c[k] / (2 * area[k] * lz)
        G[k, 1, idx] -= b[k] / (2 * area[k] * lz)
    return G


def load_vector(mesh: TriMesh, f: Callable[[np.ndarray, np.ndarray], np.ndarray],
                pattern: SparsityPattern | None = None) -> np.ndarray:
    """Source vector for a spatially varying J_src(x, y).

    Edge-midpoint quadrature, exact for quadratic integrands (f linear).
    """
    p = mesh.nodes[mesh.triangles]
    area, _, _ = element_geometry(p)
    mids = 0.5 * (p[:, [1, 2, 0]] + p[:, [2, 0, 1]])  # midpoint opposite vertex i
    fm = f(mids[..., 0], mids[..., 1])
    # N_i is 1/2 at the two midpoints adjacent to vertex i, 0 opposite it
    elem = (area / 3.0)[:, None] * 0.5 * (fm.sum(1)[:, None] - fm)
    pat = pattern or SparsityPattern(mesh.triangles, mesh.n_nodes)
    return pat.vector(elem)
