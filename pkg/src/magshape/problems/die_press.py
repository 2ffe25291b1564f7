"""Die-press benchmark: drive, objective, gradient and admissible box.

The field is driven by a uniform horizontal flux density imposed through
Dirichlet data A_z = B_drive * y on the bottom, right and top edges; the
symmetry axis x = 0 carries the natural condition. The problem is linear in
B_drive, so the pipeline solves once for a unit drive and scales.

Objective (sum over the sample arc, T^2)::

    J(p) = sum_k || B(r cos phi_k, r sin phi_k; p) - B_goal e_k ||^2
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ..fem import flux_in_triangles, flux_in_triangles_dot, flux_operator
from ..ledger import Ledger
from ..mesh import Material, MeshError, RegionMap, TriMesh, load_mesh, locate_points
from ..nurbs_de import DesignElementMap, GeometryError
from ..affine import AffineGeometryError
from ..params import ConstraintSet
from ..sensitivity import DesignElementParametrization, FieldModel, objective_gradient
from . import die_press_geometry as geo

LOWER_MM = (5.1, 16.0, 14.5, 9.5)
UPPER_MM = (9.0, 18.0, 16.0, 13.0)
REFERENCE_MINIMIZER_MM = (5.1, 16.0, 16.0, 9.5)
TARGET_OBJECTIVE_T2 = 1.413498

DE_MESH_ASSET = "die_press_de.mesh"
AFFINE_MESH_ASSET = "die_press_affine.mesh"
AFFINE_LAYOUT_ASSET = "die_press_affine.json"


def asset_path(name: str) -> Path:
    return Path(str(resources.files("magshape.problems") / "assets" / name))


@dataclass(frozen=True)
class DiePressConfig:
    """Die-press settings. Lengths of p in mm, everything else SI.

    ``b_drive`` fixes the drive flux density; when ``None`` it is calibrated
    with ``calibration``:

    * ``"objective"``: J at ``calibration_point_mm`` equals
      ``calibration_target`` (larger root of the quadratic in B_drive),
    * ``"cavity"``: the mean |B| over the sample points at the box centre
      equals ``b_goal``.
    """

    b_goal: float = 0.35
    r_smp: float = 11.75e-3
    phi_f: float = np.pi / 4
    n_samples: int = 9
    y_j_mm: float = 10.5
    mu_r_iron: float = 1000.0
    mu_r_air: float = 1.0
    lz: float = 1.0
    lower_mm: tuple = LOWER_MM
    upper_mm: tuple = UPPER_MM
    b_drive: float | None = None
    calibration: str = "objective"
    calibration_point_mm: tuple = REFERENCE_MINIMIZER_MM
    calibration_target: float = TARGET_OBJECTIVE_T2
    parametrization: str = "design_element"
    mesh_path: str | None = None
    layout_path: str | None = None
    solver: str = "direct"

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("need at least two sample points")
        if self.calibration not in ("objective", "cavity"):
            raise ValueError(f"unknown drive calibration {self.calibration!r}")
        if self.parametrization not in ("design_element", "affine"):
            raise ValueError(f"unknown parametrization {self.parametrization!r}")
        if not self.r_smp > 0 or not self.lz > 0:
            raise ValueError("r_smp and lz must be positive")

    @property
    def angles(self) -> np.ndarray:
        return self.phi_f * np.arange(self.n_samples) / (self.n_samples - 1)

    @property
    def directions(self) -> np.ndarray:
        phi = self.angles
        return np.column_stack([np.cos(phi), np.sin(phi)])

    @property
    def sample_points(self) -> np.ndarray:
        return self.r_smp * self.directions

    @property
    def box_center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lower_mm) + np.asarray(self.upper_mm))

    def constraints(self) -> ConstraintSet:
        return ConstraintSet.box(self.lower_mm, self.upper_mm)


def regions(cfg: DiePressConfig) -> RegionMap:
    iron = Material.relative(cfg.mu_r_iron)
    air = Material.relative(cfg.mu_r_air)
    rm = RegionMap({t: iron for t in geo.IRON_TAGS})
    rm.update({t: air for t in geo.AIR_TAGS})
    return rm


def unit_drive() -> dict:
    """Dirichlet data A_z = y on bottom, right and top (unit drive)."""
    def a(x, y):
        return y
    return {geo.BOTTOM: a, geo.RIGHT: a, geo.TOP: a}


def squared_deviation(B: np.ndarray, goal: np.ndarray):
    """(sum ||B_k - goal_k||^2, dJ/dB)."""
    d = B - goal
    return float(np.sum(d * d)), 2.0 * d


class DiePressModel:
    """Objective J(p) and gradient for the die press (p in mm).

    J and grad J requested at the same p share one FE solve.
    """

    def __init__(self, cfg: DiePressConfig | None = None, ledger: Ledger | None = None,
                 parametrization=None):
        self.cfg = cfg = cfg or DiePressConfig()
        self.ledger = ledger if ledger is not None else Ledger()
        self.par = parametrization if parametrization is not None else build_parametrization(cfg)
        self.field = FieldModel(self.par, cfg.solver, self.ledger)
        self.goal = cfg.b_goal * cfg.directions
        self.b_drive = cfg.b_drive if cfg.b_drive is not None else self.calibrate()

    @property
    def n_params(self) -> int:
        return self.par.n_params

    # the unit-drive field
    def _unit_flux(self, p, field: FieldModel | None = None):
        st = (field or self.field).state(p)
        mesh = st.solution.mesh
        tris = locate_points(mesh, self.cfg.sample_points)
        return st, mesh, tris, flux_in_triangles(mesh, st.solution.a, self.cfg.lz, tris)

    def flux(self, p) -> np.ndarray:
        """B at the sample points (T), shape (n_samples, 2)."""
        return self.b_drive * self._unit_flux(np.asarray(p, float))[3]

    def calibrate(self) -> float:
        """B_drive from the configured calibration rule (solves outside the ledger)."""
        cfg = self.cfg
        side = FieldModel(self.par, cfg.solver, Ledger())
        if cfg.calibration == "cavity":
            B1 = self._unit_flux(cfg.box_center, side)[3]
            return cfg.b_goal / float(np.mean(np.linalg.norm(B1, axis=1)))
        B1 = self._unit_flux(np.asarray(cfg.calibration_point_mm, float), side)[3]
        a = np.sum(B1 * B1)
        b = np.sum(B1 * self.goal)
        c = np.sum(self.goal * self.goal) - cfg.calibration_target
        disc = b * b - a * c
        if disc < 0:
            raise ValueError("calibration target below the attainable minimum "
                             f"{np.sum(self.goal**2) - b * b / a:.6g} T^2")
        return float((b + np.sqrt(disc)) / a)

    def objective(self, p) -> float:
        """J(p) in T^2; raises GeometryError for an invalid geometry."""
        p = _checked(p, self.n_params)
        try:
            B = self.flux(p)
        except (AffineGeometryError, MeshError) as exc:
            raise GeometryError(str(exc)) from exc
        return squared_deviation(B, self.goal)[0]

    def gradient(self, p) -> np.ndarray:
        """Analytic dJ/dp (T^2 per mm) by direct sensitivities."""
        p = _checked(p, self.n_params)
        try:
            st, mesh, tris, B1 = self._unit_flux(p)
        except (AffineGeometryError, MeshError) as exc:
            raise GeometryError(str(exc)) from exc
        s = self.b_drive
        _, dJdB = squared_deviation(s * B1, self.goal)
        G = flux_operator(mesh, self.cfg.lz, tris)                  # (k, 2, n)
        grad_a = s * np.einsum("kc,kcn->n", dJdB, G)
        dB = flux_in_triangles_dot(mesh, st.solution.a, self.cfg.lz, tris,
                                   st.node_velocity)                # (I, k, 2)
        explicit = s * np.einsum("kc,ikc->i", dJdB, dB)
        sset = self.field.sensitivities(p)
        return objective_gradient(grad_a, sset, explicit)

    def value_and_gradient(self, p):
        return self.objective(p), self.gradient(p)


def _checked(p, n):
    p = np.asarray(p, float)
    if p.shape != (n,):
        raise ValueError(f"expected {n} parameters, got shape {p.shape}")
    return p


def load_asset_mesh(path: str | None, default: str) -> TriMesh:
    target = Path(path) if path else asset_path(default)
    if not target.exists():
        raise FileNotFoundError(f"die-press mesh asset not found: {target}")
    return load_mesh(target)


def build_parametrization(cfg: DiePressConfig):
    if cfg.parametrization == "affine":
        from .die_press_affine import affine_parametrization
        return affine_parametrization(cfg)
    mesh = load_asset_mesh(cfg.mesh_path, DE_MESH_ASSET)
    dem = DesignElementMap(mesh, geo.design_elements(cfg.y_j_mm), geo.ELEMENT_TAGS, geo.P_REF)
    return DesignElementParametrization(dem, regions(cfg), cfg.lz, unit_drive())


def die_press_objective(p, model: DiePressModel):
    """(J(p), grad J(p)) for the die press, p in mm."""
    return model.value_and_gradient(p)


def die_press_problem(cfg: DiePressConfig | None = None, p0=None, ledger: Ledger | None = None):
    """Optimization problem: objective, gradient and the 8 box constraints."""
    from ..optimize import OptimizationProblem
    cfg = cfg or DiePressConfig()
    model = DiePressModel(cfg, ledger)
    start = cfg.box_center if p0 is None else np.asarray(p0, float)
    return OptimizationProblem.from_model(model, cfg.constraints(), start, name="die_press")
