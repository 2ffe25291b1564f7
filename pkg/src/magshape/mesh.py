"""Triangular meshes with region and boundary labels.

Coordinates are in meters. Meshes are treated as immutable: deformation
produces a new :class:`TriMesh` via :meth:`TriMesh.with_nodes`.

Text format (``#`` starts a comment)::

    NODES <n>
    <x> <y>
    TRIANGLES <m>
    <i> <j> <k> <region-tag>
    BOUNDARY <b>
    <i> <j> <label>
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MU0 = 4e-7 * np.pi
MIN_AREA = 1e-16


class MeshError(ValueError):
    pass


def signed_areas(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = nodes[triangles]
    return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))


@dataclass(frozen=True)
class TriMesh:
    nodes: np.ndarray
    triangles: np.ndarray
    regions: np.ndarray
    boundary_edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), int))
    boundary_labels: np.ndarray = field(default_factory=lambda: np.zeros(0, int))

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float).reshape(-1, 2)
        tris = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        regions = np.asarray(self.regions, dtype=np.int64).reshape(-1)
        bedges = np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        blabels = np.asarray(self.boundary_labels, dtype=np.int64).reshape(-1)
        if len(regions) != len(tris):
            raise MeshError("one region tag per triangle required")
        if len(blabels) != len(bedges):
            raise MeshError("one label per boundary edge required")
        for name, idx in (("triangle", tris), ("boundary edge", bedges)):
            if idx.size and (idx.min() < 0 or idx.max() >= len(nodes)):
                raise MeshError(f"{name} node index out of range")
        for arr in (nodes, tris, regions, bedges, blabels):
            arr.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "boundary_edges", bedges)
        object.__setattr__(self, "boundary_labels", blabels)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def areas(self) -> np.ndarray:
        return signed_areas(self.nodes, self.triangles)

    def with_nodes(self, nodes: np.ndarray) -> "TriMesh":
        """Same connectivity, moved nodes."""
        return TriMesh(nodes, self.triangles, self.regions,
                       self.boundary_edges, self.boundary_labels)

    def boundary_nodes(self, labels) -> np.ndarray:
        """Sorted node indices on edges carrying any of ``labels``."""
        labels = np.atleast_1d(labels)
        missing = set(labels.tolist()) - set(self.boundary_labels.tolist())
        if missing:
            raise MeshError(f"boundary label(s) {sorted(missing)} not in mesh")
        mask = np.isin(self.boundary_labels, labels)
        return np.unique(self.boundary_edges[mask])

    def region_triangles(self, tag: int) -> np.ndarray:
        return np.flatnonzero(self.regions == tag)


def triangle_geometry(mesh: TriMesh, t: int):
    """Area and hat-function gradient coefficients of triangle ``t``.

    Returns ``(area, b, c)`` with grad N_i = (b_i, c_i) / (2 area).
    """
    if not 0 <= t < mesh.n_triangles:
        raise IndexError(f"triangle index {t} out of range")
    area, b, c = element_geometry(mesh.nodes[mesh.triangles[[t]]])
    return float(area[0]), b[0], c[0]


def element_geometry(p: np.ndarray):
    """Vectorised linear-triangle calculus for vertex array ``p`` (nt, 3, 2)."""
    x, y = p[..., 0], p[..., 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area = 0.5 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    return area, b, c


def _fix_orientation(nodes, tris, lineno):
    area = signed_areas(nodes, tris)
    flip = area < 0
    tris = tris.copy()
    tris[flip] = tris[flip][:, [0, 2, 1]]
    bad = np.flatnonzero(np.abs(area) <= MIN_AREA)
    if bad.size:
        raise MeshError(f"line {lineno[bad[0]]}: degenerate triangle "
                        f"(area {abs(area[bad[0]]):.3e} m^2)")
    return tris


def parse_mesh(text: str) -> TriMesh:
    """Parse mesh text; clockwise triangles are reoriented."""
    lines = []
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.split("#", 1)[0].strip()
        if s:
            lines.append((no, s.split()))

    pos = 0

    def header(name):
        nonlocal pos
        if pos >= len(lines):
            raise MeshError(f"unexpected end of file, expected {name}")
        no, tok = lines[pos]
        if tok[0].upper() != name or len(tok) != 2:
            raise MeshError(f"line {no}: expected '{name} <count>'")
        try:
            count = int(tok[1])
        except ValueError:
            raise MeshError(f"line {no}: bad count {tok[1]!r}") from None
        pos += 1
        return count

    def rows(count, width, conv):
        nonlocal pos
        out, nos = [], []
        for _ in range(count):
            if pos >= len(lines):
                raise MeshError("unexpected end of file")
            no, tok = lines[pos]
            if len(tok) != width:
                raise MeshError(f"line {no}: expected {width} fields, got {len(tok)}")
            try:
                out.append([conv(v) for v in tok])
            except ValueError:
                raise MeshError(f"line {no}: malformed value") from None
            nos.append(no)
            pos += 1
        return out, nos

    n = header("NODES")
    node_rows, _ = rows(n, 2, float)
    nodes = np.array(node_rows, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(nodes)):
        raise MeshError("non-finite node coordinate")
    m = header("TRIANGLES")
    tri_rows, tri_nos = rows(m, 4, int)
    tri = np.array(tri_rows, dtype=np.int64).reshape(-1, 4)
    for r, no in zip(tri, tri_nos):
        if r[:3].min() < 0 or r[:3].max() >= n:
            raise MeshError(f"line {no}: node index out of range")
    edges = np.zeros((0, 3), dtype=np.int64)
    if pos < len(lines):
        nb = header("BOUNDARY")
        b_rows, b_nos = rows(nb, 3, int)
        edges = np.array(b_rows, dtype=np.int64).reshape(-1, 3)
        for r, no in zip(edges, b_nos):
            if r[:2].min() < 0 or r[:2].max() >= n:
                raise MeshError(f"line {no}: node index out of range")
    if pos != len(lines):
        raise MeshError(f"line {lines[pos][0]}: trailing content")
    tris = _fix_orientation(nodes, tri[:, :3], np.array(tri_nos))
    return TriMesh(nodes, tris, tri[:, 3], edges[:, :2], edges[:, 2])


def load_mesh(path) -> TriMesh:
    return parse_mesh(Path(path).read_text())


def format_mesh(mesh: TriMesh, comment: str | None = None) -> str:
    out = []
    if comment:
        out += [f"# {line}" for line in comment.splitlines()]
    out.append(f"NODES {mesh.n_nodes}")
    out += [f"{x:.17g} {y:.17g}" for x, y in mesh.nodes]
    out.append(f"TRIANGLES {mesh.n_triangles}")
    out += [f"{i} {j} {k} {r}" for (i, j, k), r in zip(mesh.triangles, mesh.regions)]
    out.append(f"BOUNDARY {len(mesh.boundary_edges)}")
    out += [f"{i} {j} {lab}" for (i, j), lab in
            zip(mesh.boundary_edges, mesh.boundary_labels)]
    return "\n".join(out) + "\n"


def save_mesh(mesh: TriMesh, path, comment: str | None = None) -> None:
    Path(path).write_text(format_mesh(mesh, comment))


def locate_points(mesh: TriMesh, points, tol: float = 1e-12) -> np.ndarray:
    """Index of a triangle containing each point (brute-force barycentric scan).

    Raises :class:`MeshError` if a point lies outside the mesh.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    p = mesh.nodes[mesh.triangles]
    area, b, c = element_geometry(p)
    out = np.empty(len(pts), dtype=np.int64)
    for k, q in enumerate(pts):
        # hat functions are linear: N_i(q) = 1/3 + grad N_i . (q - centroid)
        lam = 1.0 / 3.0 + (b * (q[0] - p[:, :, 0].mean(1)[:, None])
                           + c * (q[1] - p[:, :, 1].mean(1)[:, None])) / (2 * area[:, None])
        inside = np.flatnonzero(np.all(lam >= -tol, axis=1))
        if inside.size == 0:
            raise MeshError(f"point {tuple(q)} lies outside the mesh")
        out[k] = inside[0]
    return out


@dataclass(frozen=True)
class Material:
    """Linear material data for one region.

    ``nu`` reluctivity (m/H), ``sigma`` conductivity (S/m), ``j_src`` z-current
    density (A/m^2), ``h_m`` in-plane magnetizing field (A/m).
    """

    nu: float
    sigma: float = 0.0
    j_src: float = 0.0
    h_m: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("reluctivity must be positive")
        if self.sigma < 0:
            raise ValueError("conductivity must be nonnegative")
        if self.j_src != 0 and any(self.h_m):
            raise ValueError("a region is either a source or a magnet, not both")

    @classmethod
    def relative(cls, mu_r: float, **kw) -> "Material":
        return cls(nu=1.0 / (MU0 * mu_r), **kw)


class RegionMap(dict):
    """Mapping region tag -> :class:`Material`."""

    def per_triangle(self, regions: np.ndarray):
        """Arrays (nu, sigma, j_src, hx, hy), one entry per triangle."""
        tags = np.unique(regions)
        missing = [int(t) for t in tags if int(t) not in self]
        if missing:
            raise MeshError(f"no material for region tag(s) {missing}")
        table = np.array([[self[int(t)].nu, self[int(t)].sigma, self[int(t)].j_src,
                           self[int(t)].h_m[0], self[int(t)].h_m[1]] for t in tags])
        idx = np.searchsorted(tags, regions)
        return tuple(table[idx, k] for k in range(5))


BOTTOM, RIGHT, TOP, LEFT = 1, 2, 3, 4


def rectangle_mesh(nx: int, ny: int, x0: float = 0.0, x1: float = 1.0,
                   y0: float = 0.0, y1: float = 1.0, region: int = 1) -> TriMesh:
    """Structured mesh of a rectangle, each cell split along its diagonal.

    Boundary labels: 1 bottom, 2 right, 3 top, 4 left.
    """
    if nx < 1 or ny < 1:
        raise ValueError("need at least one cell per direction")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    a, b = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
    c, d = idx[1:, 1:].ravel(), idx[1:, :-1].ravel()
    tris = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    edges = [np.column_stack([idx[0, :-1], idx[0, 1:]]),
             np.column_stack([idx[:-1, -1], idx[1:, -1]]),
             np.column_stack([idx[-1, 1:], idx[-1, :-1]]),
             np.column_stack([idx[1:, 0], idx[:-1, 0]])]
    labels = np.concatenate([np.full(len(e), lab) for e, lab in
                             zip(edges, (BOTTOM, RIGHT, TOP, LEFT))])
    return TriMesh(nodes, tris, np.full(len(tris), region), np.concatenate(edges), labels)
