"""Die-press cross-section: regions, design elements and mesh generation.

Quarter model in the first quadrant, all lengths in millimetres here and in
metres on the mesh. Design vector p = (p1, p2, p3, p4):

* p1  radius of the inner die mold (quarter circle),
* p2, p3  semiaxes of the elliptic face of the outer die mold,
* p4  x-position of the vertical step m-k of the outer die mold.

The elliptic arc runs from i = (p2, 0) up to j = (p2 cos(alpha), y_j). The
outer mold has a step: from j along y = y_j to k = (p4, y_j), up to
m = (p4, y_j + 2) and back along y = y_j + 2 to the mold's outer face x = 20.
The cavity is the fixed annular sector 9.5 <= r <= 12.5, 0 <= phi <= phi_f.

Region tags
-----------
====  =======================================  ========
tag   region                                   material
====  =======================================  ========
1     inner core r <= 3                        iron
2     air (fixed)                              air
3     cavity (fixed)                           air
5     pole piece 25 <= x <= 30                 iron
11    design element: inner mold 3 <= r <= p1  iron
12    design element: air p1 <= r <= 9.5       air
13    design element: outer mold below y_j     iron
14    design element: air in front of ellipse  air
15    design element: air gap to fixed Bezier  air
16    design element: air under the step       air
17    design element: step of the outer mold   iron
18    design element: air above the step       air
====  =======================================  ========

Boundary labels: 1 bottom (y = 0), 2 right (x = 30), 3 top (y = 25),
4 left (x = 0, symmetry axis, natural condition).
"""
from __future__ import annotations

import numpy as np

from ..nurbs import BEZIER_QUADRATIC_KNOTS, bezier, circle_arc, ellipse_arc, polyline
from ..nurbs_de import (CurveBinding, DesignElement, PointBinding, circle_binding,
                        ellipse_binding, ellipse_end_point)

MM = 1e-3

WIDTH, HEIGHT = 30.0, 25.0
CORE_R = 3.0
CAVITY_R_IN, CAVITY_R_OUT = 9.5, 12.5
DIE_X = 20.0
POLE_X = 25.0
STEP_H = 2.0
LEFT_X = 7.0          # left end of the step strip
TOP_Y = 15.0          # upper edge of the air element above the step
MOVING_BEZIER = ((14.0, 0.0), (14.0, 6.0))   # + (p4, y_j)
FIXED_BEZIER = ((13.0, 0.0), (13.0, 7.0), (LEFT_X, None))  # None -> y_j

IRON_TAGS = (1, 5, 11, 13, 17)
AIR_TAGS = (2, 3, 12, 14, 15, 16, 18)
CAVITY_TAG = 3
ELEMENT_TAGS = ((11,), (12,), (15,), (14,), (13,), (16,), (17,), (18,))
BOTTOM, RIGHT, TOP, LEFT = 1, 2, 3, 4

P_REF = np.array([7.05, 17.0, 15.25, 11.25])
N_PARAMS = 4


def j_point(p, y_j):
    alpha = np.arcsin(y_j / p[2])
    return np.array([p[1] * np.cos(alpha), y_j])


def _fixed_bezier(y_j):
    (a, b, (cx, _)) = FIXED_BEZIER
    return bezier([a, b, (cx, y_j)])


def design_elements(y_j: float = 10.5, p_ref=P_REF):
    """The eight design elements (curves in metres, p in millimetres).

    The polyline knots (fractions along the step edges) are frozen at
    ``p_ref`` so that the knot vectors never depend on p.
    """
    n = N_PARAMS
    s = MM
    y = y_j * s
    e4 = np.zeros(n)
    e4[3] = s
    zero = np.zeros(n)
    k = PointBinding.affine([0.0, y], [e4, zero])
    m = PointBinding.affine([0.0, y + STEP_H * s], [e4, zero])
    jb = ellipse_end_point(1, 2, n, y, s)
    jx_ref = j_point(p_ref, y_j)[0]
    t_j = (jx_ref - p_ref[3]) / (DIE_X - p_ref[3])
    t_m = (p_ref[3] - LEFT_X) / (DIE_X - LEFT_X)

    circle_p1 = circle_binding(0, n, s)
    ellipse = ellipse_binding(1, 2, n, y, s)
    moving_bezier = CurveBinding.from_points(
        2, BEZIER_QUADRATIC_KNOTS,
        [np.array(MOVING_BEZIER[0]) * s, np.array(MOVING_BEZIER[1]) * s, k])
    fixed = CurveBinding.fixed
    lin = np.array([0.0, 0.0, 1.0, 1.0])

    def seg(a, b):
        return CurveBinding.from_points(1, lin, [a, b])

    els = [
        DesignElement(circle_p1, fixed(circle_arc(CORE_R * s)), "inner mold"),
        DesignElement(fixed(circle_arc(CAVITY_R_IN * s)), circle_p1, "inner air"),
        DesignElement(moving_bezier, fixed(_scaled(_fixed_bezier(y_j), s)), "bezier gap"),
        DesignElement(ellipse, moving_bezier, "ellipse air"),
        DesignElement(ellipse, fixed(polyline([[DIE_X * s, 0], [DIE_X * s, y]])),
                      "outer mold"),
        DesignElement(seg(np.array([LEFT_X * s, y + STEP_H * s]), m),
                      seg(np.array([LEFT_X * s, y]), k), "under step"),
        DesignElement(seg(m, np.array([DIE_X * s, y + STEP_H * s])),
                      CurveBinding.from_points(1, [0, 0, t_j, 1, 1],
                                               [k, jb, np.array([DIE_X * s, y])]),
                      "step"),
        DesignElement(fixed(polyline(np.array([[LEFT_X, TOP_Y], [p_ref[3], TOP_Y],
                                               [DIE_X, TOP_Y]]) * s, [t_m])),
                      CurveBinding.from_points(
                          1, [0, 0, t_m, 1, 1],
                          [np.array([LEFT_X * s, y + STEP_H * s]), m,
                           np.array([DIE_X * s, y + STEP_H * s])]),
                      "above step"),
    ]
    return els


def _scaled(curve, s):
    from ..nurbs import NurbsCurve
    return NurbsCurve(curve.degree, curve.knots, curve.control_points * s, curve.weights)


# ------------------------------------------------------------- meshing

def _arc_fn(r, a0=0.0, a1=np.pi / 2):
    c = circle_arc(r)
    return lambda u: c.evaluate(np.asarray(u))


def region_polygons(p, y_j=10.5, phi_f=np.pi / 4, n=200):
    """Reference-geometry polygons (mm) used to tag triangles."""
    u = np.linspace(0, 1, n)
    p1, p2, p3, p4 = p
    arc = lambda r: circle_arc(r).evaluate(u)  # noqa: E731
    ell = ellipse_arc(p2, p3, y_j).evaluate(u)
    jx = ell[-1, 0]
    mov = bezier([MOVING_BEZIER[0], MOVING_BEZIER[1], (p4, y_j)]).evaluate(u)
    fix = _fixed_bezier(y_j).evaluate(u)
    phi = np.linspace(0, phi_f, n)
    ring = lambda r, ph: np.column_stack([r * np.cos(ph), r * np.sin(ph)])  # noqa: E731
    yt = y_j + STEP_H
    return [
        (3, np.vstack([ring(CAVITY_R_IN, phi), ring(CAVITY_R_OUT, phi[::-1])])),
        (1, np.vstack([[0, 0], arc(CORE_R)])),
        (11, np.vstack([arc(CORE_R)[::-1], arc(p1)])),
        (12, np.vstack([arc(p1)[::-1], arc(CAVITY_R_IN)])),
        (15, np.vstack([fix, mov[::-1]])),
        (14, np.vstack([mov, ell[::-1]])),
        (13, np.vstack([ell, [[DIE_X, y_j], [DIE_X, 0]]])),
        (16, np.array([[LEFT_X, y_j], [p4, y_j], [p4, yt], [LEFT_X, yt]])),
        (17, np.array([[p4, y_j], [jx, y_j], [DIE_X, y_j], [DIE_X, yt], [p4, yt]])),
        (18, np.array([[LEFT_X, yt], [DIE_X, yt], [DIE_X, TOP_Y], [LEFT_X, TOP_Y]])),
        (5, np.array([[POLE_X, 0], [WIDTH, 0], [WIDTH, HEIGHT], [POLE_X, HEIGHT]])),
        (2, None),
    ]


def size_function(h_fine=0.35, h_mid=0.6, h_coarse=2.0):
    def size(pts):
        x, y = pts[:, 0], pts[:, 1]
        r = np.hypot(x, y)
        h = np.full(len(pts), h_coarse)
        h[(x < DIE_X + 1) & (y < TOP_Y + 1)] = h_mid
        h[(r > CAVITY_R_IN - 1.0) & (r < CAVITY_R_OUT + 0.8)
          & (np.arctan2(y, x) < np.pi / 4 + 0.15)] = h_fine
        return h
    return size


def build_reference_mesh(y_j=10.5, phi_f=np.pi / 4, p=P_REF, h_fine=0.35,
                         h_mid=0.6, h_coarse=2.0):
    """Generate the design-element mesh at ``p`` (returns a TriMesh in metres)."""
    from ..mesh import TriMesh
    from .meshgen import Pslg, build_mesh, lattice_fill

    p1, p2, p3, p4 = p
    size = size_function(h_fine, h_mid, h_coarse)
    ps = Pslg()

    def nseg(length, h):
        return max(2, int(np.ceil(length / h)))

    ell = ellipse_arc(p2, p3, y_j)
    jx = ell.evaluate(1.0)[0]
    yt = y_j + STEP_H
    # outer boundary
    for a, b in [(0, CORE_R), (CORE_R, p1), (p1, CAVITY_R_IN), (CAVITY_R_IN, CAVITY_R_OUT),
                 (CAVITY_R_OUT, 13), (13, 14), (14, p2), (p2, DIE_X), (DIE_X, POLE_X),
                 (POLE_X, WIDTH)]:
        ps.line((a, 0), (b, 0), nseg(b - a, size(np.array([[a, 0]]))[0]), BOTTOM)
    ps.line((WIDTH, 0), (WIDTH, HEIGHT), nseg(HEIGHT, h_coarse), RIGHT)
    ps.line((WIDTH, HEIGHT), (POLE_X, HEIGHT), nseg(5, h_coarse), TOP)
    ps.line((POLE_X, HEIGHT), (0, HEIGHT), nseg(POLE_X, h_coarse), TOP)
    for a, b in [(HEIGHT, CAVITY_R_IN), (CAVITY_R_IN, p1), (p1, CORE_R), (CORE_R, 0)]:
        ps.line((0, a), (0, b), nseg(a - b, h_mid if a < TOP_Y else h_coarse), LEFT)
    # interfaces
    for r, h in [(CORE_R, h_mid), (p1, h_mid), (CAVITY_R_IN, h_fine)]:
        ps.curve(_arc_fn(r), nseg(np.pi / 2 * r, h), breaks=[0.5])
    phi = np.linspace(0, phi_f, nseg(phi_f * CAVITY_R_OUT, h_fine) + 1)
    ps.curve(lambda u: np.column_stack([CAVITY_R_OUT * np.cos(phi_f * np.asarray(u)),
                                        CAVITY_R_OUT * np.sin(phi_f * np.asarray(u))]),
             len(phi) - 1)
    c45 = np.array([np.cos(phi_f), np.sin(phi_f)])
    ps.line(CAVITY_R_IN * c45, CAVITY_R_OUT * c45, nseg(3, h_fine))
    ps.curve(lambda u: _fixed_bezier(y_j).evaluate(np.asarray(u)), nseg(14, h_mid))
    mov = bezier([MOVING_BEZIER[0], MOVING_BEZIER[1], (p4, y_j)])
    ps.curve(lambda u: mov.evaluate(np.asarray(u)), nseg(12, h_mid))
    ps.curve(lambda u: ell.evaluate(np.asarray(u)), nseg(14, h_mid))
    ps.line((DIE_X, 0), (DIE_X, y_j), nseg(y_j, h_mid))
    ps.line((LEFT_X, y_j), (p4, y_j), nseg(p4 - LEFT_X, h_mid))
    ps.line((p4, y_j), (jx, y_j), nseg(jx - p4, h_mid))
    ps.line((jx, y_j), (DIE_X, y_j), nseg(DIE_X - jx, h_mid))
    ps.line((LEFT_X, y_j), (LEFT_X, yt), nseg(STEP_H, h_mid))
    ps.line((p4, y_j), (p4, yt), nseg(STEP_H, h_mid))
    ps.line((DIE_X, y_j), (DIE_X, yt), nseg(STEP_H, h_mid))
    ps.line((LEFT_X, yt), (p4, yt), nseg(p4 - LEFT_X, h_mid))
    ps.line((p4, yt), (DIE_X, yt), nseg(DIE_X - p4, h_mid))
    ps.line((LEFT_X, yt), (LEFT_X, TOP_Y), nseg(TOP_Y - yt, h_mid))
    ps.line((DIE_X, yt), (DIE_X, TOP_Y), nseg(TOP_Y - yt, h_mid))
    ps.line((LEFT_X, TOP_Y), (p4, TOP_Y), nseg(p4 - LEFT_X, h_mid))
    ps.line((p4, TOP_Y), (DIE_X, TOP_Y), nseg(DIE_X - p4, h_mid))
    ps.line((POLE_X, 0), (POLE_X, HEIGHT), nseg(HEIGHT, h_coarse))

    levels = int(np.ceil(np.log2(h_coarse / h_fine)))
    fill = lattice_fill(((0, 0), (WIDTH, HEIGHT)), size, h_coarse, levels)
    inside = (fill[:, 0] > 0) & (fill[:, 0] < WIDTH) & (fill[:, 1] > 0) & (fill[:, 1] < HEIGHT)
    mesh = build_mesh(ps, fill[inside], size, region_polygons(p, y_j, phi_f))
    return TriMesh(mesh.nodes * MM, mesh.triangles, mesh.regions,
                   mesh.boundary_edges, mesh.boundary_labels)
