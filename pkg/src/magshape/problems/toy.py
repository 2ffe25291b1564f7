"""Two-subdomain rectangle with a magnet, for the affine machinery.

The rectangle [0, p1] x [0, p2] (mm) is split along its diagonal from (0, 0)
to (p1, p2). The lower triangle holds a permanent magnet, the upper one is
air carrying a uniform source current. A_z = 0 on the whole boundary.
Both triangles are affine images of the reference triangles, so the affine
decomposition is exact.
"""
from __future__ import annotations

import numpy as np

from ..affine import AffineFactors, AffineSubdomain, fixed_vertex, linear_vertex, vertex_function
from ..mesh import BOTTOM, LEFT, RIGHT, TOP, Material, RegionMap, rectangle_mesh
from ..params import ConstraintSet
from ..sensitivity import AffineParametrization

MM = 1e-3
P_REF = np.array([10.0, 6.0])
LOWER_MM = (5.0, 3.0)
UPPER_MM = (15.0, 9.0)
MAGNET, AIR = 2, 1


def toy_regions(mu_r_magnet=1.05, h_m=(3e5, 4e5), j_src=1e6) -> RegionMap:
    return RegionMap({AIR: Material.relative(1.0, j_src=j_src),
                      MAGNET: Material.relative(mu_r_magnet, h_m=tuple(h_m))})


def toy_mesh(n: int = 32, p_ref=P_REF):
    """n x n cells (2 n^2 triangles); the diagonal follows cell diagonals."""
    p1, p2 = np.asarray(p_ref, float) * MM
    mesh = rectangle_mesh(n, n, 0.0, p1, 0.0, p2)
    cent = mesh.nodes[mesh.triangles].mean(axis=1)
    lower = cent[:, 1] / p2 < cent[:, 0] / p1
    regions = np.where(lower, MAGNET, AIR)
    return mesh.__class__(mesh.nodes, mesh.triangles, regions,
                          mesh.boundary_edges, mesh.boundary_labels)


def toy_subdomains(mesh, p_ref=P_REF) -> list[AffineSubdomain]:
    e1 = np.array([[MM, 0.0], [0.0, 0.0]])      # d(x, y)/dp for the vertex (p1, 0)
    e2 = np.array([[0.0, 0.0], [0.0, MM]])      # (0, p2)
    e12 = np.array([[MM, 0.0], [0.0, MM]])      # (p1, p2)
    o = fixed_vertex([0.0, 0.0])
    a = linear_vertex([0.0, 0.0], e1)
    b = linear_vertex([0.0, 0.0], e12)
    c = linear_vertex([0.0, 0.0], e2)
    out = []
    for tag, fns in ((MAGNET, (o, a, b)), (AIR, (o, b, c))):
        vf = vertex_function(fns)
        ref, _ = vf(np.asarray(p_ref, float))
        out.append(AffineSubdomain(ref, vf, np.flatnonzero(mesh.regions == tag)))
    return out


def toy_factors(n: int = 32, lz: float = 1.0, regions: RegionMap | None = None) -> AffineFactors:
    mesh = toy_mesh(n)
    return AffineFactors(mesh, regions or toy_regions(), toy_subdomains(mesh), lz, P_REF)


def toy_dirichlet() -> dict:
    return {label: 0.0 for label in (BOTTOM, RIGHT, TOP, LEFT)}


def toy_parametrization(n: int = 32, lz: float = 1.0) -> AffineParametrization:
    return AffineParametrization(toy_factors(n, lz), toy_dirichlet())


def toy_constraints() -> ConstraintSet:
    return ConstraintSet.box(LOWER_MM, UPPER_MM)
