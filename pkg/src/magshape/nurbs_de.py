"""Design elements: mesh patches spanned by two parametrized NURBS curves.

A design element blends two curves,

    f(xh, yh; p) = C1(xh; p) * yh + C2(xh; p) * (1 - yh),   (xh, yh) in [0, 1]^2,

and moves every mesh node inside it by re-evaluating f at the node's cached
preimage. Knots never depend on p, so basis tables at the preimages are
computed once; only control points and weights change.

Bindings turn a design vector into control points and weights together with
their derivatives, giving exact node velocities dx/dp for the sensitivity
analysis. Design vectors are in millimetres while curves live in metres; the
conversion is a binding concern (``scale``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .mesh import MIN_AREA, MeshError, TriMesh, signed_areas
from .nurbs import (BEZIER_QUADRATIC_KNOTS, NurbsCurve, basis_matrix, circle_arc,
                    ellipse_arc, ellipse_control, eval_basis, eval_curve, polyline,
                    bezier, rational_from_basis)

__all__ = [
    "NurbsCurve", "eval_basis", "eval_curve", "circle_arc", "ellipse_arc",
    "polyline", "bezier", "PointBinding", "CurveBinding", "DesignElement",
    "DesignElementMap", "GeometryError", "de_map", "de_invert", "de_jacobian",
    "deform_mesh",
]

NEWTON_MAXIT = 50
INVERT_RTOL = 1e-10


class GeometryError(ValueError):
    """Parameter vector produces an invalid (folded or degenerate) geometry."""


# ---------------------------------------------------------------- bindings

@dataclass(frozen=True)
class PointBinding:
    """A control point (or weight, with width 1) as a function of p.

    ``fun(p)`` returns ``(value, d value / dp)`` with derivative shape
    ``(I, width)``.
    """

    fun: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]

    def __call__(self, p):
        return self.fun(p)

    @classmethod
    def fixed(cls, value) -> "PointBinding":
        v = np.array(value, dtype=float).reshape(-1)
        return cls(lambda p: (v.copy(), np.zeros((len(p), v.size))))

    @classmethod
    def affine(cls, base, jac) -> "PointBinding":
        """value = base + jac @ p, with ``jac`` of shape (width, I)."""
        base = np.array(base, dtype=float).reshape(-1)
        jac = np.array(jac, dtype=float).reshape(base.size, -1)
        return cls(lambda p: (base + jac @ p, jac.T.copy()))


@dataclass(frozen=True)
class CurveBinding:
    """Parametrized NURBS curve: fixed degree/knots, bound points and weights."""

    degree: int
    knots: np.ndarray
    points: tuple[PointBinding, ...]
    weights: tuple[PointBinding, ...]

    def __post_init__(self):
        object.__setattr__(self, "knots", np.asarray(self.knots, dtype=float))
        if len(self.points) != len(self.weights):
            raise ValueError("one weight binding per control point required")
        if len(self.knots) != len(self.points) + self.degree + 1:
            raise ValueError("knot vector length does not match control points")

    def control(self, p):
        """``(ctrl (n,2), w (n,), dctrl (I,n,2), dw (I,n))``."""
        pts = [b(p) for b in self.points]
        ws = [b(p) for b in self.weights]
        ctrl = np.array([v for v, _ in pts])
        dctrl = np.stack([d for _, d in pts], axis=1)
        w = np.array([v[0] for v, _ in ws])
        dw = np.stack([d[:, 0] for _, d in ws], axis=1)
        return ctrl, w, dctrl, dw

    def curve(self, p) -> NurbsCurve:
        ctrl, w, _, _ = self.control(p)
        return NurbsCurve(self.degree, self.knots, ctrl, w)

    @classmethod
    def fixed(cls, curve: NurbsCurve) -> "CurveBinding":
        return cls(curve.degree, curve.knots,
                   tuple(PointBinding.fixed(c) for c in curve.control_points),
                   tuple(PointBinding.fixed([w]) for w in curve.weights))

    @classmethod
    def from_points(cls, degree, knots, points, weights=None) -> "CurveBinding":
        """Curve from point bindings (or fixed coordinates) and constant weights."""
        pts = tuple(b if isinstance(b, PointBinding) else PointBinding.fixed(b)
                    for b in points)
        w = np.ones(len(pts)) if weights is None else np.asarray(weights, float)
        return cls(degree, knots, pts, tuple(PointBinding.fixed([x]) for x in w))


def _unit(n, i, scale):
    e = np.zeros(n)
    e[i] = scale
    return e


def circle_binding(index: int, n_params: int, scale: float = 1.0) -> CurveBinding:
    """Quarter circle whose radius is ``scale * p[index]``."""
    e = _unit(n_params, index, scale)
    pts = [PointBinding.affine([0, 0], [e, 0 * e]),
           PointBinding.affine([0, 0], [e, e]),
           PointBinding.affine([0, 0], [0 * e, e])]
    w = [PointBinding.fixed([1.0]), PointBinding.fixed([np.sqrt(0.5)]),
         PointBinding.fixed([1.0])]
    return CurveBinding(2, BEZIER_QUADRATIC_KNOTS, tuple(pts), tuple(w))


class _EllipseParts:
    """Ellipse arc control data and closed-form derivatives in (L2, L3)."""

    def __init__(self, i2, i3, n, y_end, scale):
        self.i2, self.i3, self.n, self.y, self.s = i2, i3, n, y_end, scale

    def __call__(self, p):
        L2, L3 = self.s * p[self.i2], self.s * p[self.i3]
        ctrl, w, alpha = ellipse_control(L2, L3, self.y)
        dalpha = -np.tan(alpha) / L3
        t = np.tan(alpha / 2)
        # d/dL2 and d/dL3 of P0, P1 = (L2, L3 tan(alpha/2)), P2 = (L2 cos a, y)
        d2 = np.array([[1, 0], [1, 0], [np.cos(alpha), 0]], float)
        d3 = np.array([[0, 0], [0, t + L3 * 0.5 / np.cos(alpha / 2) ** 2 * dalpha],
                       [-L2 * np.sin(alpha) * dalpha, 0]])
        dctrl = np.zeros((self.n, 3, 2))
        dctrl[self.i2] += self.s * d2
        dctrl[self.i3] += self.s * d3
        dw = np.zeros((self.n, 3))
        dw[self.i3, 1] = -0.5 * np.sin(alpha / 2) * dalpha * self.s
        return ctrl, w, dctrl, dw


def ellipse_binding(i2: int, i3: int, n_params: int, y_end: float,
                    scale: float = 1.0) -> CurveBinding:
    """Ellipse arc with semiaxes ``scale * p[i2]``, ``scale * p[i3]`` up to ``y_end``.

    Control points depend nonlinearly on the semiaxis ``p[i3]`` through the arc
    angle; derivatives are closed form.
    """
    parts = _EllipseParts(i2, i3, n_params, y_end, scale)

    def point(k):
        return PointBinding(lambda p: (parts(p)[0][k], parts(p)[2][:, k, :]))

    def weight(k):
        return PointBinding(lambda p: (parts(p)[1][k:k + 1], parts(p)[3][:, k:k + 1]))

    return CurveBinding(2, BEZIER_QUADRATIC_KNOTS, tuple(point(k) for k in range(3)),
                        tuple(weight(k) for k in range(3)))


def ellipse_end_point(i2: int, i3: int, n_params: int, y_end: float,
                      scale: float = 1.0) -> PointBinding:
    """End point (L2 cos(alpha), y_end) of :func:`ellipse_binding`'s arc."""
    parts = _EllipseParts(i2, i3, n_params, y_end, scale)
    return PointBinding(lambda p: (parts(p)[0][2], parts(p)[2][:, 2, :]))


# ------------------------------------------------------ curve evaluation

def _curve_eval(table, ctrl, w, dctrl=None, dw=None):
    """C, dC/du and, if bindings derivatives are given, dC/dp and d(dC/du)/dp.

    ``table`` comes from :func:`basis_matrix` (nder=1).
    """
    c, dc, r = rational_from_basis(table, ctrl, w)
    if dctrl is None:
        return c, dc
    N0, N1 = table[0], table[1]
    W = N0 @ w
    W1 = N1 @ w
    # derivatives with respect to each parameter (leading axis I)
    dA = np.einsum("uk,ik,kd->iud", N0, dw, ctrl) + np.einsum("uk,k,ikd->iud", N0, w, dctrl)
    dW = np.einsum("uk,ik->iu", N0, dw)
    dA1 = np.einsum("uk,ik,kd->iud", N1, dw, ctrl) + np.einsum("uk,k,ikd->iud", N1, w, dctrl)
    dW1 = np.einsum("uk,ik->iu", N1, dw)
    dC = (dA - dW[..., None] * c) / W[:, None]
    ddc = (dA1 - dW1[..., None] * c - W1[:, None] * dC - dc * dW[..., None]) / W[:, None]
    return c, dc, dC, ddc


@dataclass(frozen=True)
class DesignElement:
    """Blend of ``curve1`` (at yh = 1) and ``curve2`` (at yh = 0)."""

    curve1: CurveBinding
    curve2: CurveBinding
    name: str = ""

    def _eval(self, xh, yh, p, derivs: bool):
        xh = np.atleast_1d(np.asarray(xh, float))
        yh = np.atleast_1d(np.asarray(yh, float))
        out = []
        for cb in (self.curve1, self.curve2):
            table = basis_matrix(cb.knots, cb.degree, xh, nder=1)
            ctrl, w, dctrl, dw = cb.control(p)
            out.append(_curve_eval(table, ctrl, w, dctrl if derivs else None,
                                   dw if derivs else None))
        return xh, yh, out

    def map(self, xh, yh, p) -> np.ndarray:
        xh, yh, ((c1, _), (c2, _)) = self._eval(xh, yh, p, False)
        return c1 * yh[:, None] + c2 * (1 - yh[:, None])

    def jacobian(self, xh, yh, p) -> np.ndarray:
        """(n, 2, 2) with columns d/dxh and d/dyh."""
        xh, yh, ((c1, d1), (c2, d2)) = self._eval(xh, yh, p, False)
        J = np.empty((len(xh), 2, 2))
        J[:, :, 0] = d1 * yh[:, None] + d2 * (1 - yh[:, None])
        J[:, :, 1] = c1 - c2
        return J

    def param_derivatives(self, xh, yh, p):
        """``(df/dp (I,n,2), dJ/dp (I,n,2,2))`` at the given preimages."""
        xh, yh, ((_, _, dC1, dd1), (_, _, dC2, dd2)) = self._eval(xh, yh, p, True)
        y = yh[None, :, None]
        df = dC1 * y + dC2 * (1 - y)
        dJ = np.empty(df.shape + (2,))
        dJ[..., 0] = dd1 * y + dd2 * (1 - y)
        dJ[..., 1] = dC1 - dC2
        return df, dJ

    def diameter(self, p) -> float:
        g = np.linspace(0, 1, 9)
        X, Y = np.meshgrid(g, g)
        pts = self.map(X.ravel(), Y.ravel(), p)
        return float(np.linalg.norm(pts.max(0) - pts.min(0)))

    def invert(self, points, p, tol: float = 1e-9) -> np.ndarray:
        """Preimages (n, 2) of points by damped Newton with a 3x3 multistart.

        Points must lie in the element image up to ``tol`` (metres).
        """
        pts = np.atleast_2d(np.asarray(points, float))
        diam = self.diameter(p)
        target = INVERT_RTOL * diam
        out = np.full((len(pts), 2), np.nan)
        todo = np.arange(len(pts))
        starts = [(a, b) for a in (0.5, 0.15, 0.85) for b in (0.5, 0.15, 0.85)]
        for s in starts:
            if todo.size == 0:
                break
            x0 = np.tile(s, (todo.size, 1))
            sol, ok = self._newton(pts[todo], x0, p, target, tol)
            out[todo[ok]] = sol[ok]
            todo = todo[~ok]
        if todo.size:
            q = pts[todo[0]]
            raise GeometryError(f"design element {self.name or '?'}: no preimage for "
                                f"point ({q[0]:.6g}, {q[1]:.6g}) after multistart Newton")
        return out

    def _newton(self, pts, x, p, target, tol):
        def resid(x):
            return self.map(x[:, 0], x[:, 1], p) - pts

        x = x.copy()
        r = resid(x)
        nr = np.linalg.norm(r, axis=1)
        for _ in range(NEWTON_MAXIT):
            active = nr > target * 1e-3
            if not np.any(active):
                break
            J = self.jacobian(x[:, 0], x[:, 1], p)
            det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            safe = np.abs(det) > 1e-300
            step = np.zeros_like(x)
            inv_det = np.where(safe, 1.0 / np.where(safe, det, 1.0), 0.0)
            step[:, 0] = (J[:, 1, 1] * r[:, 0] - J[:, 0, 1] * r[:, 1]) * inv_det
            step[:, 1] = (-J[:, 1, 0] * r[:, 0] + J[:, 0, 0] * r[:, 1]) * inv_det
            step[~active] = 0
            lam = np.ones(len(x))
            pending = active.copy()
            new_x, new_nr = x.copy(), nr.copy()
            for _ in range(30):
                if not np.any(pending):
                    break
                trial = np.clip(x[pending] - lam[pending, None] * step[pending], 0.0, 1.0)
                tr = np.linalg.norm(self.map(trial[:, 0], trial[:, 1], p) - pts[pending],
                                    axis=1)
                better = tr < nr[pending]
                idx = np.flatnonzero(pending)
                new_x[idx[better]] = trial[better]
                new_nr[idx[better]] = tr[better]
                pending[idx[better]] = False
                lam[pending] *= 0.5
            stalled = np.array_equal(new_x, x)
            x, nr = new_x, new_nr
            r = resid(x)
            if stalled:
                break
        inside = np.all((x >= -1e-9) & (x <= 1 + 1e-9), axis=1)
        xc = np.clip(x, 0.0, 1.0)
        res = np.linalg.norm(self.map(xc[:, 0], xc[:, 1], p) - pts, axis=1)
        ok = res <= np.where(inside, target, max(target, tol))
        return xc, ok


def de_map(de: DesignElement, xh, yh, p) -> np.ndarray:
    """Point(s) f_de(xh, yh; p); rejects arguments outside the unit square."""
    xh, yh = np.asarray(xh, float), np.asarray(yh, float)
    if np.any((xh < 0) | (xh > 1) | (yh < 0) | (yh > 1)):
        raise ValueError("reference coordinates must lie in [0, 1]^2")
    out = de.map(xh, yh, p)
    return out[0] if xh.ndim == 0 else out


def de_invert(de: DesignElement, point, p) -> np.ndarray:
    out = de.invert(point, p)
    return out[0] if np.ndim(point) == 1 else out


def de_jacobian(de: DesignElement, xh, yh, p):
    """Jacobian (2x2) and its parameter derivatives (I, 2, 2) at one point.

    A nonpositive determinant raises :class:`GeometryError`.
    """
    J = de.jacobian(xh, yh, p)[0]
    if np.linalg.det(J) <= 0:
        raise GeometryError(f"design element {de.name or '?'}: Jacobian determinant "
                            f"{np.linalg.det(J):.3e} <= 0 at ({xh}, {yh})")
    _, dJ = de.param_derivatives(xh, yh, p)
    return J, dJ[:, 0]


# ---------------------------------------------------------- mesh motion

@dataclass
class _Claim:
    element: DesignElement
    nodes: np.ndarray
    tables: tuple  # basis tables of curve1, curve2 at the node preimages
    yh: np.ndarray


class DesignElementMap:
    """Node motion of a mesh driven by design elements.

    ``element_regions[k]`` lists the region tags of the triangles that make up
    element ``k``. Nodes of those triangles are inverted once at ``p_ref``;
    nodes touching any triangle outside all elements never move.
    """

    def __init__(self, mesh: TriMesh, elements: Sequence[DesignElement],
                 element_regions: Sequence[Sequence[int]], p_ref):
        self.mesh = mesh
        self.elements = tuple(elements)
        self.p_ref = np.array(p_ref, dtype=float)
        if len(element_regions) != len(self.elements):
            raise ValueError("one region list per design element required")
        tri_owner = np.full(mesh.n_triangles, -1)
        for k, tags in enumerate(element_regions):
            sel = np.isin(mesh.regions, list(tags))
            if not np.any(sel):
                raise MeshError(f"design element {k} has no triangles")
            if np.any(tri_owner[sel] >= 0):
                raise MeshError("region assigned to two design elements")
            tri_owner[sel] = k
        pinned = np.zeros(mesh.n_nodes, bool)
        pinned[mesh.triangles[tri_owner < 0].ravel()] = True
        claimed = pinned.copy()
        self.claims: list[_Claim] = []
        self.preimages = np.full((mesh.n_nodes, 2), np.nan)
        self.owner = np.full(mesh.n_nodes, -1)
        for k, el in enumerate(self.elements):
            nodes = np.unique(mesh.triangles[tri_owner == k].ravel())
            nodes = nodes[~claimed[nodes]]
            claimed[nodes] = True
            if nodes.size == 0:
                continue
            pre = el.invert(mesh.nodes[nodes], self.p_ref)
            self.preimages[nodes] = pre
            self.owner[nodes] = k
            tables = tuple(basis_matrix(cb.knots, cb.degree, pre[:, 0], nder=1)
                           for cb in (el.curve1, el.curve2))
            self.claims.append(_Claim(el, nodes, tables, pre[:, 1]))
        self.moving = np.flatnonzero(self.owner >= 0)

    @property
    def n_params(self) -> int:
        return self.p_ref.size

    def node_positions(self, p, derivatives: bool = False):
        """Nodes at ``p`` and optionally dx/dp of shape (I, n_nodes, 2)."""
        p = np.asarray(p, float)
        x = self.mesh.nodes.copy()
        dx = np.zeros((p.size,) + x.shape) if derivatives else None
        for cl in self.claims:
            parts = []
            for cb, table in zip((cl.element.curve1, cl.element.curve2), cl.tables):
                ctrl, w, dctrl, dw = cb.control(p)
                if derivatives:
                    parts.append(_curve_eval(table, ctrl, w, dctrl, dw))
                else:
                    parts.append(_curve_eval(table, ctrl, w))
            y = cl.yh[:, None]
            x[cl.nodes] = parts[0][0] * y + parts[1][0] * (1 - y)
            if derivatives:
                dx[:, cl.nodes] = parts[0][2] * y + parts[1][2] * (1 - y)
        return (x, dx) if derivatives else x

    def deform(self, p, derivatives: bool = False):
        """Deformed mesh (and node velocities); folded meshes raise GeometryError."""
        res = self.node_positions(p, derivatives)
        x = res[0] if derivatives else res
        area = signed_areas(x, self.mesh.triangles)
        if not np.all(area > MIN_AREA):
            t = int(np.argmin(area))
            raise GeometryError(f"triangle {t} has area {area[t]:.3e} m^2 after deformation")
        m = self.mesh.with_nodes(x)
        return (m, res[1]) if derivatives else m


def deform_mesh(mesh: TriMesh, elements, p, element_regions=None, p_ref=None) -> TriMesh:
    """Functional form of :meth:`DesignElementMap.deform`.

    ``elements`` is either a prepared :class:`DesignElementMap` or a list of
    elements (then ``element_regions`` and ``p_ref`` are required).
    """
    if isinstance(elements, DesignElementMap):
        return elements.deform(p)
    return DesignElementMap(mesh, elements, element_regions, p_ref).deform(p)
