"""Rational B-spline curves in the plane.

Basis functions follow the Cox-de Boor recursion. Curves carry their control
points and weights as arrays; everything that depends on design parameters
lives in :mod:`magshape.design_element`, which rebuilds curves from bindings.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_KNOT_TOL = 1e-14


def find_span(knots: np.ndarray, degree: int, u: float) -> int:
    """Index ``s`` of the knot span with ``knots[s] <= u < knots[s+1]``.

    The right end of the parameter range is assigned to the last non-empty span.
    """
    n = len(knots) - degree - 1
    if u < knots[degree] - _KNOT_TOL or u > knots[n] + _KNOT_TOL:
        raise ValueError(f"parameter {u!r} outside knot range "
                         f"[{knots[degree]}, {knots[n]}]")
    if u >= knots[n]:
        s = n - 1
        while s > degree and knots[s] == knots[s + 1]:
            s -= 1
        return s
    if u <= knots[degree]:
        s = degree
        while knots[s + 1] <= knots[degree]:
            s += 1
        return s
    lo, hi = degree, n
    mid = (lo + hi) // 2
    while u < knots[mid] or u >= knots[mid + 1]:
        if u < knots[mid]:
            hi = mid
        else:
            lo = mid
        mid = (lo + hi) // 2
    return mid


def basis_derivatives(knots, degree: int, u: float, nder: int = 1):
    """Nonzero B-spline basis values and derivatives at ``u``.

    Returns ``(span, ders)`` where ``ders[k, r]`` is the k-th derivative of
    basis function ``span - degree + r``.
    """
    knots = np.asarray(knots, dtype=float)
    p = degree
    span = find_span(knots, p, u)
    ndu = np.zeros((p + 1, p + 1))
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = u - knots[span + 1 - j]
        right[j] = knots[span + j] - u
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    nder = min(nder, p)
    ders = np.zeros((nder + 1, p + 1))
    ders[0] = ndu[:, p]
    a = np.zeros((2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, nder + 1):
            d = 0.0
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1
    fac = p
    for k in range(1, nder + 1):
        ders[k] *= fac
        fac *= p - k
    return span, ders


def eval_basis(knots, degree: int, u: float) -> np.ndarray:
    """The ``degree + 1`` nonzero B-spline basis values at ``u``."""
    return basis_derivatives(knots, degree, u, nder=0)[1][0]


def basis_matrix(knots, degree: int, u, nder: int = 1) -> np.ndarray:
    """Dense basis table of shape ``(nder + 1, len(u), n_ctrl)``, ``nder <= 1``.

    Vectorised triangular Cox-de Boor recursion over all parameter values.
    Used to cache basis values at fixed parameter locations (mesh-node
    preimages), since the knots never depend on the design parameters.
    """
    if nder not in (0, 1):
        raise ValueError("only values and first derivatives are tabulated")
    t = np.asarray(knots, dtype=float)
    p = degree
    u = np.atleast_1d(np.asarray(u, dtype=float))
    n_ctrl = len(t) - p - 1
    lo, hi = t[p], t[n_ctrl]
    bad = (u < lo - _KNOT_TOL) | (u > hi + _KNOT_TOL)
    if np.any(bad):
        raise ValueError(f"parameter {u[bad][0]!r} outside knot range [{lo}, {hi}]")
    u = np.clip(u, lo, hi)
    span = np.clip(np.searchsorted(t, u, side="right") - 1, p, n_ctrl - 1)
    N = np.zeros((len(u), len(t) - 1))
    N[np.arange(len(u)), span] = 1.0
    prev = N
    for k in range(1, p + 1):
        prev = N
        m = len(t) - 1 - k
        d1 = t[k:k + m] - t[:m]
        d2 = t[k + 1:k + 1 + m] - t[1:1 + m]
        a = np.divide(u[:, None] - t[:m], d1, out=np.zeros((len(u), m)), where=d1 > 0)
        b = np.divide(t[k + 1:k + 1 + m] - u[:, None], d2, out=np.zeros((len(u), m)),
                      where=d2 > 0)
        N = a * prev[:, :m] + b * prev[:, 1:m + 1]
    out = np.zeros((nder + 1, len(u), n_ctrl))
    out[0] = N[:, :n_ctrl]
    if nder == 1:
        d1 = t[p:p + n_ctrl] - t[:n_ctrl]
        d2 = t[p + 1:p + 1 + n_ctrl] - t[1:1 + n_ctrl]
        c1 = np.divide(p, d1, out=np.zeros(n_ctrl), where=d1 > 0)
        c2 = np.divide(p, d2, out=np.zeros(n_ctrl), where=d2 > 0)
        out[1] = c1 * prev[:, :n_ctrl] - c2 * prev[:, 1:n_ctrl + 1]
    return out


def rational_from_basis(table: np.ndarray, ctrl: np.ndarray, weights: np.ndarray):
    """Points and first derivatives of a rational curve from a basis table.

    ``table`` is the output of :func:`basis_matrix` with ``nder >= 1``.
    Returns ``(C, dC/du, R)`` with ``R`` the rational basis values.
    """
    n0 = table[0] * weights
    n1 = table[1] * weights
    w = n0.sum(axis=1)
    dw = n1.sum(axis=1)
    r = n0 / w[:, None]
    c = r @ ctrl
    dc = (n1 @ ctrl - dw[:, None] * c) / w[:, None]
    return c, dc, r


@dataclass(frozen=True)
class NurbsCurve:
    """Planar NURBS curve of a given degree."""

    degree: int
    knots: np.ndarray
    control_points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        ctrl = np.asarray(self.control_points, dtype=float).reshape(-1, 2)
        w = np.asarray(self.weights, dtype=float)
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if len(knots) != len(ctrl) + self.degree + 1:
            raise ValueError(
                f"need {len(ctrl) + self.degree + 1} knots for {len(ctrl)} "
                f"control points of degree {self.degree}, got {len(knots)}")
        if np.any(np.diff(knots) < 0):
            raise ValueError("knot vector must be nondecreasing")
        if len(w) != len(ctrl) or np.any(w <= 0):
            raise ValueError("need one positive weight per control point")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "control_points", ctrl)
        object.__setattr__(self, "weights", w)

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[self.degree]), float(self.knots[-self.degree - 1])

    def rational_basis(self, u: float) -> np.ndarray:
        """All rational basis values R_i(u); they sum to one."""
        table = basis_matrix(self.knots, self.degree, u, nder=0)[0, 0]
        nw = table * self.weights
        return nw / nw.sum()

    def evaluate(self, u):
        """Point(s) on the curve. Scalar ``u`` gives shape (2,)."""
        scalar = np.ndim(u) == 0
        c, _, _ = rational_from_basis(
            basis_matrix(self.knots, self.degree, u, nder=1),
            self.control_points, self.weights)
        return c[0] if scalar else c

    def derivative(self, u):
        """Parametric tangent dC/du."""
        scalar = np.ndim(u) == 0
        _, dc, _ = rational_from_basis(
            basis_matrix(self.knots, self.degree, u, nder=1),
            self.control_points, self.weights)
        return dc[0] if scalar else dc


def eval_curve(curve: NurbsCurve, u) -> np.ndarray:
    return curve.evaluate(u)


BEZIER_QUADRATIC_KNOTS = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0])


def circle_arc(radius: float) -> NurbsCurve:
    """Quarter circle from (r, 0) to (0, r) centred at the origin."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius!r}")
    r = float(radius)
    return NurbsCurve(2, BEZIER_QUADRATIC_KNOTS,
                      [[r, 0.0], [r, r], [0.0, r]],
                      [1.0, np.sqrt(2.0) / 2.0, 1.0])


def ellipse_angle(semi_y: float, y_end: float) -> float:
    """Parametric angle at which the ellipse reaches height ``y_end``."""
    if not 0 < y_end < semi_y:
        raise ValueError(f"end height {y_end!r} must lie in (0, {semi_y!r})")
    return float(np.arcsin(y_end / semi_y))


def ellipse_lambda(semi_x: float, alpha: float) -> float:
    """Tangent scaling of the middle control point, written out in full.

    Kept in its unsimplified form so it can be checked against
    ``-tan(alpha / 2)``, which is what :func:`ellipse_arc` uses.
    """
    return (-semi_x + semi_x * np.cos(alpha)) / (semi_x * np.sin(alpha))


def ellipse_control(semi_x: float, semi_y: float, y_end: float):
    """Control points and weights of the ellipse arc, plus the arc angle."""
    alpha = ellipse_angle(semi_y, y_end)
    lam = -np.tan(alpha / 2.0)
    p2 = np.array([semi_x * np.cos(alpha), semi_y * np.sin(alpha)])
    p1 = p2 + lam * np.array([-semi_x * np.sin(alpha), semi_y * np.cos(alpha)])
    ctrl = np.array([[semi_x, 0.0], p1, p2])
    weights = np.array([1.0, np.cos(alpha / 2.0), 1.0])
    return ctrl, weights, alpha


def ellipse_arc(semi_x: float, semi_y: float, y_end: float) -> NurbsCurve:
    """Arc of the axis-aligned ellipse from (semi_x, 0) up to height ``y_end``."""
    if not (semi_x > 0 and semi_y > 0):
        raise ValueError("semi-axes must be positive")
    ctrl, weights, _ = ellipse_control(semi_x, semi_y, y_end)
    return NurbsCurve(2, BEZIER_QUADRATIC_KNOTS, ctrl, weights)


def polyline(points, breaks=None) -> NurbsCurve:
    """Degree-1 curve through ``points``.

    ``breaks`` are the interior parameter values at the inner points; by
    default they are proportional to chord length.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        raise ValueError("a polyline needs at least two points")
    if breaks is None:
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        breaks = np.cumsum(seg)[:-1] / seg.sum()
    breaks = np.asarray(breaks, dtype=float)
    if len(breaks) != len(pts) - 2:
        raise ValueError("need one break per interior point")
    knots = np.concatenate([[0.0, 0.0], breaks, [1.0, 1.0]])
    return NurbsCurve(1, knots, pts, np.ones(len(pts)))


def bezier(points, weights=None) -> NurbsCurve:
    """Single-span rational Bezier curve."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    p = len(pts) - 1
    knots = np.concatenate([np.zeros(p + 1), np.ones(p + 1)])
    w = np.ones(len(pts)) if weights is None else weights
    return NurbsCurve(p, knots, pts, w)
