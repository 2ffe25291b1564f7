"""Direct sensitivities of the FE solution and objective gradients.

For every design parameter p_i the dof sensitivity s_i = da/dp_i solves

    K s_i = d(j_src + j_m)/dp_i - (dK/dp_i) a,     s_i = 0 on Dirichlet dofs,

with the factorization of K reused for all i. Two parametrizations provide
dK/dp_i and the right-hand-side derivatives: design elements (chain rule
through the node velocities dx/dp) and affine decomposition (derivatives of
the theta factors).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .affine import AffineFactors
from .fem import (AssembledSystem, Factorization, FieldSolution, SparsityPattern,
                  apply_dirichlet, assemble_direct, magnet_elements_dot, material_arrays,
                  source_elements_dot, stiffness_elements_dot)
from .ledger import Ledger
from .mesh import RegionMap, TriMesh
from .nurbs_de import DesignElementMap
from .params import FD_REL_STEP, fd_step

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class SystemDerivatives:
    """dK/dp_i, dj_src/dp_i and dj_m/dp_i for all i."""

    dK: tuple
    dj_src: np.ndarray
    dj_m: np.ndarray

    @property
    def n_params(self) -> int:
        return len(self.dK)

    def rhs(self, i: int, a: np.ndarray) -> np.ndarray:
        return self.dj_src[i] + self.dj_m[i] - self.dK[i] @ a


@dataclass(frozen=True)
class SensitivitySet:
    s: np.ndarray            # (I, n_dof)
    source: str              # "affine" or "design-element"
    residuals: np.ndarray    # relative residual per parameter

    @property
    def n_params(self) -> int:
        return self.s.shape[0]


class DesignElementParametrization:
    """Mesh motion by design elements plus direct assembly on the moved mesh."""

    source = "design-element"

    def __init__(self, dem: DesignElementMap, regions: RegionMap, lz: float,
                 dirichlet: Mapping):
        self.dem = dem
        self.regions = regions
        self.lz = float(lz)
        self.dirichlet = dict(dirichlet)
        self.pattern = SparsityPattern(dem.mesh.triangles, dem.mesh.n_nodes)
        self._materials = material_arrays(dem.mesh, regions)
        self._ref_bc = self._assemble(dem.mesh)[0].dirichlet_values

    @property
    def n_params(self) -> int:
        return self.dem.n_params

    @property
    def reference_mesh(self) -> TriMesh:
        return self.dem.mesh

    def _assemble(self, mesh):
        sys = assemble_direct(mesh, self.regions, self.lz, self.pattern)
        return apply_dirichlet(sys, self.dirichlet), None

    def system(self, p):
        """Assembled system with Dirichlet data and node velocities (I, n, 2)."""
        mesh, dx = self.dem.deform(np.asarray(p, float), derivatives=True)
        sys, _ = self._assemble(mesh)
        _check_boundary_data(sys, self._ref_bc)
        return sys, dx

    def derivatives(self, p, sys: AssembledSystem, dx: np.ndarray) -> SystemDerivatives:
        mesh = sys.mesh
        nu, sigma, js, hx, hy = self._materials
        pts = mesh.nodes[mesh.triangles]
        dK, dsrc, dm = [], [], []
        for i in range(dx.shape[0]):
            dp = dx[i][mesh.triangles]
            dK.append(self.pattern.matrix(self.pattern.data(
                stiffness_elements_dot(pts, dp, nu, self.lz))))
            dsrc.append(self.pattern.vector(source_elements_dot(pts, dp, js)))
            dm.append(self.pattern.vector(magnet_elements_dot(pts, dp, hx, hy)))
        return SystemDerivatives(tuple(dK), np.array(dsrc), np.array(dm))


class AffineParametrization:
    """Affine decomposition: assembly and derivatives from reference factors."""

    source = "affine"

    def __init__(self, factors: AffineFactors, dirichlet: Mapping):
        self.factors = factors
        self.dirichlet = dict(dirichlet)
        self._ref_bc = apply_dirichlet(factors.assemble(factors.p_ref),
                                       self.dirichlet).dirichlet_values

    @property
    def n_params(self) -> int:
        return self.factors.n_params

    @property
    def reference_mesh(self) -> TriMesh:
        return self.factors.mesh

    @property
    def lz(self) -> float:
        return self.factors.lz

    def system(self, p):
        p = np.asarray(p, float)
        sys = apply_dirichlet(self.factors.assemble(p), self.dirichlet)
        _check_boundary_data(sys, self._ref_bc)
        _, dx = self.factors.node_positions(p, derivatives=True)
        return sys, dx

    def derivatives(self, p, sys=None, dx=None) -> SystemDerivatives:
        F = self.factors
        dth = F.theta_gradients(np.asarray(p, float))  # (L, 7, I)
        dK, dsrc, dm = [], [], []
        for i in range(F.n_params):
            d = dth[:, :, i]
            dK.append(F.pattern.matrix(F.pattern.symmetrize(F.FK @ d[:, 1:5].ravel())))
            dsrc.append(np.asarray(F.FV[:, 0::3] @ d[:, 0]).ravel())
            dm.append(np.asarray(F.FV[:, 1::3] @ d[:, 5] + F.FV[:, 2::3] @ d[:, 6]).ravel())
        return SystemDerivatives(tuple(dK), np.array(dsrc), np.array(dm))


def _check_boundary_data(sys: AssembledSystem, ref_values: np.ndarray) -> None:
    scale = max(np.abs(ref_values).max(initial=0.0), 1e-300)
    if np.abs(sys.dirichlet_values - ref_values).max(initial=0.0) > 1e-12 * scale:
        raise ValueError("Dirichlet data changes with the design parameters; "
                         "parameter-dependent boundary data is not supported")


def system_derivatives(parametrization, p, i: int | None = None):
    """(dK/dp_i, dj_src/dp_i, dj_m/dp_i), or the full set when ``i`` is None."""
    sys, dx = parametrization.system(p)
    d = parametrization.derivatives(p, sys, dx)
    if i is None:
        return d
    if not 0 <= i < d.n_params:
        raise IndexError(f"parameter index {i} out of range for {d.n_params} parameters")
    return d.dK[i], d.dj_src[i], d.dj_m[i]


def solve_sensitivities(fact: Factorization, sol: FieldSolution, derivs: SystemDerivatives,
                        source: str = "") -> SensitivitySet:
    """One back substitution per parameter with the existing factorization."""
    s, res = [], []
    for i in range(derivs.n_params):
        x, rel = fact.solve_homogeneous(derivs.rhs(i, sol.a))
        s.append(x)
        res.append(rel)
    return SensitivitySet(np.array(s).reshape(derivs.n_params, -1), source, np.array(res))


def objective_gradient(grad_a, sset: SensitivitySet, explicit=None) -> np.ndarray:
    """dJ/dp_i = grad_a J . s_i + explicit dJ/dp_i."""
    g = np.zeros(sset.n_params) if grad_a is None else np.asarray(grad_a, float)
    if g.ndim == 1 and g.size != sset.n_params and g.size != sset.s.shape[1]:
        raise ValueError(f"gradient with respect to a has length {g.size}, "
                         f"expected {sset.s.shape[1]}")
    out = sset.s @ g if g.size == sset.s.shape[1] else np.zeros(sset.n_params)
    if explicit is not None:
        e = np.asarray(explicit, float)
        if e.shape != (sset.n_params,):
            raise ValueError(f"explicit term has shape {e.shape}, expected ({sset.n_params},)")
        out = out + e
    return out


def fd_gradient(f: Callable[[np.ndarray], float], p, scheme: str = "central",
                step=None, rel: float = FD_REL_STEP) -> np.ndarray:
    """Finite-difference gradient (validation only).

    Default step is ``rel * max(|p_i|, 1)``; ``step`` overrides it (scalar or
    per-component).
    """
    p = np.asarray(p, float)
    h = fd_step(p, rel) if step is None else np.broadcast_to(np.asarray(step, float), p.shape)
    f0 = None
    g = np.empty_like(p)
    for i in range(p.size):
        e = np.zeros_like(p)
        e[i] = h[i]
        if scheme == "central":
            fp, fm = f(p + e), f(p - e)
            d = (fp - fm) / (2 * h[i])
            vals = (fp, fm)
        elif scheme == "forward":
            if f0 is None:
                f0 = f(p)
            fp = f(p + e)
            d = (fp - f0) / h[i]
            vals = (fp, f0)
        else:
            raise ValueError(f"unknown difference scheme {scheme!r}")
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"non-finite function value in difference along p[{i}]")
        g[i] = d
    return g


# --------------------------------------------------------------- pipeline

@dataclass
class FieldState:
    p: np.ndarray
    system: AssembledSystem
    factorization: Factorization
    solution: FieldSolution
    node_velocity: np.ndarray
    _sens: SensitivitySet | None = None


class FieldModel:
    """Parameter -> field pipeline with a one-entry cache.

    An objective and its gradient requested at the same p share one
    factorization: one FE solve plus I back substitutions.
    """

    def __init__(self, parametrization, method: str = "direct", ledger: Ledger | None = None):
        self.par = parametrization
        self.method = method
        self.ledger = ledger if ledger is not None else Ledger()
        self._state: FieldState | None = None

    @property
    def n_params(self) -> int:
        return self.par.n_params

    def state(self, p) -> FieldState:
        p = np.asarray(p, float)
        st = self._state
        if st is not None and st.p.shape == p.shape and np.array_equal(st.p, p):
            return st
        sys, dx = self.par.system(p)
        fact = Factorization(sys, self.method, self.ledger)
        sol = fact.solve_field()
        self._state = FieldState(p.copy(), sys, fact, sol, dx)
        return self._state

    def sensitivities(self, p) -> SensitivitySet:
        st = self.state(p)
        if st._sens is None:
            d = self.par.derivatives(st.p, st.system, st.node_velocity)
            st._sens = solve_sensitivities(st.factorization, st.solution, d, self.par.source)
        return st._sens
