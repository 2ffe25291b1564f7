"""Die press with affine decomposition.

Each design element is cut into cells along (xh, yh): strips in xh whose
samples coincide on curves shared by two elements, and a few layers in yh.
Every cell is split into two macro triangles with vertices at DE images of
the cell corners. Vertex positions are smooth
functions of p, the fine mesh is generated with all macro edges as
constraints, and each fine triangle inside a macro triangle follows that
triangle's affine map. Curved interfaces therefore become polygons with a
vertex at every strip sample.

The layout (which element and which (xh, yh) each macro vertex uses, plus
the fine triangles of each subdomain) is stored as a JSON sidecar next to
the mesh asset.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..affine import AffineFactors, AffineSubdomain
from ..mesh import TriMesh, save_mesh
from ..sensitivity import AffineParametrization
from . import die_press_geometry as geo
from .meshgen import Pslg, build_mesh, lattice_fill

LAYOUT_VERSION = 1
N_CIRCLE = 16        # strips on the circle elements (even: 45 degrees is a vertex)
N_BEZIER = 10        # strips on the Bezier / ellipse elements
N_STEP_LEFT = 3      # strips left of the step (x from 7 to p4)
N_STEP_KJ = 2        # strips of the step between k and j
N_STEP_RIGHT = 4     # strips of the step between j and x = 20


def strip_samples(y_j: float = 10.5, p_ref=geo.P_REF) -> list[np.ndarray]:
    """xh samples per design element, chosen so that shared curves coincide."""
    jx = geo.j_point(p_ref, y_j)[0]
    t_j = (jx - p_ref[3]) / (geo.DIE_X - p_ref[3])
    t_m = (p_ref[3] - geo.LEFT_X) / (geo.DIE_X - geo.LEFT_X)
    circ = np.linspace(0, 1, N_CIRCLE + 1)
    bez = np.linspace(0, 1, N_BEZIER + 1)
    left = np.linspace(0, 1, N_STEP_LEFT + 1)
    step = np.unique(np.concatenate([np.linspace(0, t_j, N_STEP_KJ + 1),
                                     np.linspace(t_j, 1, N_STEP_RIGHT + 1)]))
    above = np.unique(np.concatenate([left * t_m, t_m + step * (1 - t_m)]))
    # element order as in design_elements()
    return [circ, circ, bez, bez, bez, left, step, above]


def _layers(de, u, p, max_layers=8):
    """Number of yh layers giving roughly square cells at ``p``."""
    um = 0.5 * (u[:-1] + u[1:])
    bottom = _points(de, np.column_stack([u, np.zeros_like(u)]), p)
    top = _points(de, np.column_stack([u, np.ones_like(u)]), p)
    width = 0.5 * (np.linalg.norm(np.diff(bottom, axis=0), axis=1)
                   + np.linalg.norm(np.diff(top, axis=0), axis=1))
    height = np.linalg.norm(_points(de, np.column_stack([um, np.ones_like(um)]), p)
                            - _points(de, np.column_stack([um, np.zeros_like(um)]), p), axis=1)
    return int(np.clip(np.round(np.median(height / width)), 1, max_layers))


def _macro_triangles(elements, samples, p):
    """List of (element, [(xh, yh)] * 3); each cell uses the better-shaped diagonal."""
    out = []
    for e, (de, u) in enumerate(zip(elements, samples)):
        v = np.linspace(0.0, 1.0, _layers(de, u, p) + 1)
        for k in range(len(u) - 1):
            for j in range(len(v) - 1):
                q0, q1 = (u[k], v[j]), (u[k + 1], v[j])
                r0, r1 = (u[k], v[j + 1]), (u[k + 1], v[j + 1])
                options = [[(q0, q1, r1), (q0, r1, r0)], [(q0, q1, r0), (q1, r1, r0)]]
                best, score = None, -np.inf
                for tris in options:
                    angles = [_min_angle(_points(de, t, p)) for t in tris]
                    if min(angles) > score:
                        best, score = tris, min(angles)
                if best is None:
                    raise ValueError(f"degenerate cell ({k}, {j}) in design element {e}")
                for t in best:
                    if _signed_area(_points(de, t, p)) < 0:
                        t = (t[0], t[2], t[1])
                    out.append((e, [tuple(map(float, q)) for q in t]))
    return out


def _points(de, uv, p):
    uv = np.asarray(uv, float)
    return de.map(uv[:, 0], uv[:, 1], p)


def _min_angle(P):
    ang = []
    for a in range(3):
        u, v = P[(a + 1) % 3] - P[a], P[(a + 2) % 3] - P[a]
        ang.append(np.arccos(np.clip(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)), -1, 1)))
    scale = max(np.ptp(P, axis=0)) ** 2
    return min(ang) if abs(_signed_area(P)) > 1e-9 * scale else -np.inf


def _signed_area(P):
    return 0.5 * ((P[1, 0] - P[0, 0]) * (P[2, 1] - P[0, 1])
                  - (P[2, 0] - P[0, 0]) * (P[1, 1] - P[0, 1]))


def _split_collinear(edges, verts, tol=1e-9):
    """Split macro edges at macro vertices lying strictly inside them."""
    out = []
    for a, b in edges:
        A, B = verts[a], verts[b]
        d = B - A
        L2 = d @ d
        t = (verts - A) @ d / L2
        dist = np.abs((verts[:, 0] - A[0]) * d[1] - (verts[:, 1] - A[1]) * d[0]) / np.sqrt(L2)
        inner = np.flatnonzero((t > tol) & (t < 1 - tol) & (dist < tol))
        chain = [a] + list(inner[np.argsort(t[inner])]) + [b]
        out += list(zip(chain[:-1], chain[1:]))
    return sorted({tuple(sorted(e)) for e in out})


def build_affine_mesh(y_j=10.5, phi_f=np.pi / 4, p=geo.P_REF, h_fine=0.3, h_mid=0.5,
                      h_coarse=1.5):
    """Generate the affine-variant mesh (metres) and its subdomain layout."""
    p = np.asarray(p, float)
    elements = geo.design_elements(y_j, p)
    samples = strip_samples(y_j, p)
    macro = _macro_triangles(elements, samples, p)
    # macro vertices in mm, deduplicated
    key_of, verts = {}, []
    tri_idx = []
    for e, uvs in macro:
        P = _points(elements[e], uvs, p) / geo.MM
        ids = []
        for q in P:
            k = tuple(np.round(q, 9))
            if k not in key_of:
                key_of[k] = len(verts)
                verts.append(q)
            ids.append(key_of[k])
        tri_idx.append(ids)
    verts = np.array(verts)
    edges = set()
    for t in tri_idx:
        for a in range(3):
            edges.add(tuple(sorted((t[a], t[(a + 1) % 3]))))
    edges = _split_collinear(sorted(edges), verts)

    size = geo.size_function(h_fine, h_mid, h_coarse)
    ps = Pslg()

    def nseg(a, b, h=None):
        a, b = np.asarray(a, float), np.asarray(b, float)
        h = h if h is not None else min(size(np.array([a, b])))
        return max(1, int(np.ceil(np.linalg.norm(b - a) / h)))

    for a, b in edges:
        A, B = verts[a], verts[b]
        label = (geo.BOTTOM if abs(A[1]) < 1e-12 and abs(B[1]) < 1e-12 else
                 geo.LEFT if abs(A[0]) < 1e-12 and abs(B[0]) < 1e-12 else 0)
        ps.line(A, B, nseg(A, B), label)
    # fixed geometry outside the design elements
    H, W = geo.HEIGHT, geo.WIDTH
    r_in = geo.CAVITY_R_IN
    for a, b in [(0, geo.CORE_R), (r_in, geo.CAVITY_R_OUT), (geo.CAVITY_R_OUT, 13),
                 (geo.DIE_X, geo.POLE_X), (geo.POLE_X, W)]:
        ps.line((a, 0), (b, 0), nseg((a, 0), (b, 0)), geo.BOTTOM)
    ps.line((W, 0), (W, H), nseg((W, 0), (W, H), h_coarse), geo.RIGHT)
    ps.line((W, H), (geo.POLE_X, H), nseg((W, H), (geo.POLE_X, H), h_coarse), geo.TOP)
    ps.line((geo.POLE_X, H), (0, H), nseg((geo.POLE_X, H), (0, H), h_coarse), geo.TOP)
    for a, b in [(H, r_in), (geo.CORE_R, 0)]:
        ps.line((0, a), (0, b), nseg((0, a), (0, b), h_mid if a < geo.TOP_Y else h_coarse),
                geo.LEFT)
    ps.line((geo.POLE_X, 0), (geo.POLE_X, H), nseg((geo.POLE_X, 0), (geo.POLE_X, H), h_coarse))
    n_out = int(np.ceil(phi_f * geo.CAVITY_R_OUT / h_fine))
    ps.curve(lambda u: geo.CAVITY_R_OUT * np.column_stack(
        [np.cos(phi_f * np.asarray(u)), np.sin(phi_f * np.asarray(u))]), n_out)
    c = np.array([np.cos(phi_f), np.sin(phi_f)])
    ps.line(r_in * c, geo.CAVITY_R_OUT * c, nseg(r_in * c, geo.CAVITY_R_OUT * c, h_fine))

    # tagging: macro triangles first, then fixed regions
    polys = [(1000 + l, verts[t]) for l, t in enumerate(tri_idx)]
    arc_in = _points(elements[1], [(u, 0.0) for u in samples[1]], p) / geo.MM
    arc_core = _points(elements[0], [(u, 0.0) for u in samples[0]], p) / geo.MM
    phi = np.linspace(0, phi_f, 100)
    cav_in = arc_in[np.arctan2(arc_in[:, 1], arc_in[:, 0]) <= phi_f + 1e-12]
    cavity = np.vstack([cav_in, geo.CAVITY_R_OUT * np.column_stack(
        [np.cos(phi[::-1]), np.sin(phi[::-1])])])
    polys += [(geo.CAVITY_TAG, cavity), (1, np.vstack([[0, 0], arc_core])),
              (5, np.array([[geo.POLE_X, 0], [W, 0], [W, H], [geo.POLE_X, H]])), (2, None)]

    levels = int(np.ceil(np.log2(h_coarse / h_fine)))
    fill = lattice_fill(((0, 0), (W, H)), size, h_coarse, levels)
    inside = (fill[:, 0] > 0) & (fill[:, 0] < W) & (fill[:, 1] > 0) & (fill[:, 1] < H)
    # keep fill points away from macro vertices inside the moving region
    mesh = build_mesh(ps, fill[inside], size, polys, smooth_sweeps=0)
    sub = mesh.regions >= 1000
    owner = np.where(sub, mesh.regions - 1000, -1)
    tags = mesh.regions.copy()
    elem_tag = np.array([geo.ELEMENT_TAGS[e][0] for e, _ in macro])
    tags[sub] = elem_tag[owner[sub]]
    mesh = TriMesh(mesh.nodes * geo.MM, mesh.triangles, tags, mesh.boundary_edges,
                   mesh.boundary_labels)
    layout = {
        "version": LAYOUT_VERSION,
        "y_j_mm": float(y_j),
        "p_ref_mm": [float(x) for x in p],
        "subdomains": [
            {"element": int(e), "uv": [[float(a), float(b)] for a, b in uvs],
             "triangles": np.flatnonzero(owner == l).tolist()}
            for l, (e, uvs) in enumerate(macro)
        ],
    }
    return mesh, layout


def _vertex_function(de, uv):
    uv = np.asarray(uv, float)

    def f(p):
        p = np.asarray(p, float)
        X = de.map(uv[:, 0], uv[:, 1], p)
        dX, _ = de.param_derivatives(uv[:, 0], uv[:, 1], p)
        return X, dX
    return f


def _batch_vertices(elements, layout):
    """All subdomain vertices at once, one DE evaluation per element."""
    subs = layout["subdomains"]
    L = len(subs)
    groups = {}
    for l, sd in enumerate(subs):
        groups.setdefault(sd["element"], []).append(l)
    plan = [(elements[e], np.array(ls), np.array([subs[l]["uv"] for l in ls], float).reshape(-1, 2))
            for e, ls in sorted(groups.items())]

    def f(p):
        p = np.asarray(p, float)
        X = np.empty((L, 3, 2))
        dX = np.empty((p.size, L, 3, 2))
        for de, ls, uv in plan:
            X[ls] = de.map(uv[:, 0], uv[:, 1], p).reshape(-1, 3, 2)
            dX[:, ls] = de.param_derivatives(uv[:, 0], uv[:, 1], p)[0].reshape(p.size, -1, 3, 2)
        return X, dX
    return f


def subdomains_from_layout(mesh: TriMesh, layout: dict) -> list[AffineSubdomain]:
    if layout.get("version") != LAYOUT_VERSION:
        raise ValueError(f"unsupported affine layout version {layout.get('version')!r}")
    p_ref = np.asarray(layout["p_ref_mm"], float)
    elements = geo.design_elements(layout["y_j_mm"], p_ref)
    out = []
    for sd in layout["subdomains"]:
        de = elements[sd["element"]]
        fn = _vertex_function(de, sd["uv"])
        ref, _ = fn(p_ref)
        out.append(AffineSubdomain(ref, fn, np.asarray(sd["triangles"], int)))
    return out


def save_affine_assets(mesh: TriMesh, layout: dict, mesh_path, layout_path) -> None:
    save_mesh(mesh, mesh_path, comment="die press, affine-decomposition variant")
    Path(layout_path).write_text(json.dumps(layout, indent=1, sort_keys=True) + "\n")


def affine_factors(cfg, mesh_path=None, layout_path=None) -> AffineFactors:
    from .die_press import (AFFINE_LAYOUT_ASSET, AFFINE_MESH_ASSET, asset_path,
                            load_asset_mesh, regions)
    mesh = load_asset_mesh(mesh_path or cfg.mesh_path, AFFINE_MESH_ASSET)
    lp = Path(layout_path or cfg.layout_path or asset_path(AFFINE_LAYOUT_ASSET))
    if not lp.exists():
        raise FileNotFoundError(f"affine layout asset not found: {lp}")
    layout = json.loads(lp.read_text())
    if abs(layout["y_j_mm"] - cfg.y_j_mm) > 1e-12:
        raise ValueError("affine layout was generated for a different y_j")
    subs = subdomains_from_layout(mesh, layout)
    elements = geo.design_elements(layout["y_j_mm"], np.asarray(layout["p_ref_mm"], float))
    return AffineFactors(mesh, regions(cfg), subs, cfg.lz, layout["p_ref_mm"],
                         vertices=_batch_vertices(elements, layout))


def affine_parametrization(cfg) -> AffineParametrization:
    from .die_press import unit_drive
    return AffineParametrization(affine_factors(cfg), unit_drive())
