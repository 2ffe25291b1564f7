"""Offline generator for the shipped triangle meshes.

A small conforming Delaunay mesher on top of ``scipy.spatial.Delaunay``:
boundary curves are sampled into constraint segments, the interior is filled
with nested square lattices following a size function, and constraint
segments missing from the triangulation are split at their curve midpoint
until all are recovered. Triangles are tagged by centroid location.

Only used to (re)build assets; the optimization pipeline never remeshes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from ..mesh import TriMesh, signed_areas

CurveFn = Callable[[np.ndarray], np.ndarray]


def point_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd ray casting; ``poly`` is a closed ring without repeated end."""
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    x0, y0 = poly[:, 0][None, :], poly[:, 1][None, :]
    x1, y1 = np.roll(poly[:, 0], -1)[None, :], np.roll(poly[:, 1], -1)[None, :]
    crosses = (y0 > y) != (y1 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    return (np.sum(crosses & (x < xint), axis=1) % 2) == 1


@dataclass
class _Segment:
    i: int
    j: int
    fn: CurveFn
    u0: float
    u1: float
    label: int


@dataclass
class Pslg:
    """Points and curve-backed constraint segments."""

    points: list = field(default_factory=list)
    segments: list = field(default_factory=list)
    _index: dict = field(default_factory=dict)

    def point(self, xy) -> int:
        key = tuple(np.round(np.asarray(xy, float), 12))
        if key not in self._index:
            self._index[key] = len(self.points)
            self.points.append(np.asarray(xy, float))
        return self._index[key]

    def curve(self, fn: CurveFn, n: int, label: int = 0, u0=0.0, u1=1.0,
              breaks=()) -> list[int]:
        """Sample ``fn`` on ``n`` equal parameter steps (plus ``breaks``)."""
        u = np.unique(np.concatenate([np.linspace(u0, u1, n + 1), list(breaks)]))
        xy = fn(u)
        idx = [self.point(q) for q in xy]
        for k in range(len(u) - 1):
            self.segments.append(_Segment(idx[k], idx[k + 1], fn, u[k], u[k + 1], label))
        return idx

    def line(self, a, b, n: int, label: int = 0, breaks=()) -> list[int]:
        a, b = np.asarray(a, float), np.asarray(b, float)
        return self.curve(lambda u: a + np.asarray(u)[:, None] * (b - a), n, label,
                          breaks=breaks)


def lattice_fill(bbox, size: Callable[[np.ndarray], np.ndarray], h0: float,
                 levels: int, seed: int = 0) -> np.ndarray:
    """Nested square lattices; a level-k point is kept where size <= h0 / 2^k."""
    (xa, ya), (xb, yb) = bbox
    pts = []
    for k in range(levels + 1):
        h = h0 / 2**k
        xs = np.arange(xa, xb + 0.5 * h, h)
        ys = np.arange(ya, yb + 0.5 * h, h)
        X, Y = np.meshgrid(xs, ys)
        cand = np.column_stack([X.ravel(), Y.ravel()])
        if k > 0:  # drop points already on the coarser lattice
            ix = np.rint((cand - [xa, ya]) / h).astype(int)
            cand = cand[(ix[:, 0] % 2 == 1) | (ix[:, 1] % 2 == 1)]
        need = size(cand)
        keep = need <= h * 1.0001 if k > 0 else np.ones(len(cand), bool)
        pts.append(cand[keep])
    pts = np.concatenate(pts)
    rng = np.random.default_rng(seed)
    return pts + rng.uniform(-1, 1, pts.shape) * 0.02 * size(pts)[:, None]


def triangulate(pslg: Pslg, fill: np.ndarray, size, max_rounds: int = 40):
    """Conforming Delaunay triangulation; returns (nodes, triangles, seg list)."""
    bpts = np.array(pslg.points)
    # drop fill points too close to the boundary samples
    dense = []
    for s in pslg.segments:
        a, b = bpts[s.i], bpts[s.j]
        m = max(2, int(np.ceil(np.linalg.norm(b - a) / (0.2 * size(a[None])[0]))))
        t = np.linspace(0, 1, m + 1)[:, None]
        dense.append(a + t * (b - a))
    tree = cKDTree(np.concatenate(dense))
    dist, _ = tree.query(fill)
    fill = fill[dist > 0.55 * size(fill)]
    segs = list(pslg.segments)
    for _ in range(max_rounds):
        nodes = np.concatenate([np.array(pslg.points), fill])
        tri = Delaunay(nodes, qhull_options="Qbb Qc Qz Q12").simplices
        edges = set()
        for a, b in ((0, 1), (1, 2), (2, 0)):
            e = np.sort(tri[:, [a, b]], axis=1)
            edges.update(map(tuple, e.tolist()))
        missing = [s for s in segs if tuple(sorted((s.i, s.j))) not in edges]
        if not missing:
            break
        # split missing segments at their curve midpoint; remove fill points nearby
        for s in missing:
            um = 0.5 * (s.u0 + s.u1)
            k = pslg.point(s.fn(np.array([um]))[0])
            segs.remove(s)
            segs += [_Segment(s.i, k, s.fn, s.u0, um, s.label),
                     _Segment(k, s.j, s.fn, um, s.u1, s.label)]
            q = np.array(pslg.points[k])
            r = 0.5 * np.linalg.norm(np.array(pslg.points[s.j]) - np.array(pslg.points[s.i]))
            fill = fill[np.linalg.norm(fill - q, axis=1) > r]
    else:
        raise RuntimeError("segment recovery did not converge")
    return nodes, tri, segs


def smooth(nodes, tri, fixed: np.ndarray, sweeps: int = 3) -> np.ndarray:
    """Laplacian smoothing of free nodes (keeps the connectivity)."""
    x = nodes.copy()
    n = len(x)
    nbr = [set() for _ in range(n)]
    for t in tri:
        for a in range(3):
            nbr[t[a]].update((t[(a + 1) % 3], t[(a + 2) % 3]))
    free = np.flatnonzero(~fixed)
    for _ in range(sweeps):
        new = x.copy()
        for v in free:
            new[v] = x[list(nbr[v])].mean(axis=0)
        trial = new
        if np.all(signed_areas(trial, tri) > 0):
            x = trial
    return x


def build_mesh(pslg: Pslg, fill, size, regions, labels=(0,), smooth_sweeps=3) -> TriMesh:
    """Triangulate and tag.

    ``regions`` is an ordered list of ``(tag, polygon)``; the first polygon
    containing a triangle centroid wins, the last entry may use ``None`` as a
    catch-all. Boundary edges keep the labels of their segments (label 0 is
    treated as internal and dropped).
    """
    nodes, tri, segs = triangulate(pslg, fill, size)
    area = signed_areas(nodes, tri)
    tri[area < 0] = tri[area < 0][:, [0, 2, 1]]
    nb = len(pslg.points)
    fixed = np.zeros(len(nodes), bool)
    fixed[:nb] = True
    nodes = smooth(nodes, tri, fixed, smooth_sweeps)
    cent = nodes[tri].mean(axis=1)
    tags = np.full(len(tri), -1)
    for tag, poly in regions:
        sel = (tags < 0) & (np.ones(len(tri), bool) if poly is None
                            else point_in_polygon(cent, np.asarray(poly)))
        tags[sel] = tag
    if np.any(tags < 0):
        raise RuntimeError(f"{np.sum(tags < 0)} triangles without a region")
    # drop unused nodes (none expected) and keep labelled boundary edges
    bedges = np.array([[s.i, s.j] for s in segs if s.label not in labels]).reshape(-1, 2)
    blabels = np.array([s.label for s in segs if s.label not in labels], dtype=int)
    return TriMesh(nodes, tri, tags, bedges, blabels)


def min_angle_deg(mesh: TriMesh) -> float:
    p = mesh.nodes[mesh.triangles]
    ang = []
    for a in range(3):
        u = p[:, (a + 1) % 3] - p[:, a]
        v = p[:, (a + 2) % 3] - p[:, a]
        c = np.sum(u * v, 1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        ang.append(np.degrees(np.arccos(np.clip(c, -1, 1))))
    return float(np.min(ang))
