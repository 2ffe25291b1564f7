"""Independent reference computations used by the tests.

Nothing here imports the package under test; each oracle solves its problem
by a different (usually brute-force) route.
"""
from __future__ import annotations

import itertools

import numpy as np


def hat_gradients(vertices):
    """Area and gradients of the three barycentric functions.

    Solves the 3x3 interpolation system [1 x y] c = e_i instead of using
    edge-vector formulas.
    """
    V = np.asarray(vertices, float)
    M = np.column_stack([np.ones(3), V])
    coef = np.linalg.solve(M, np.eye(3))       # column i: (c0, cx, cy) of N_i
    area = 0.5 * abs(np.linalg.det(M))
    return area, coef[1:].T                     # (3, 2) gradients


def cox_de_boor(knots, i, p, u):
    """B-spline basis N_{i,p}(u) straight from the recursive definition."""
    t = knots
    if p == 0:
        last = t[i + 1] == t[-1] and t[i] < t[i + 1]
        return 1.0 if (t[i] <= u < t[i + 1]) or (last and u == t[-1]) else 0.0
    out = 0.0
    if t[i + p] > t[i]:
        out += (u - t[i]) / (t[i + p] - t[i]) * cox_de_boor(t, i, p - 1, u)
    if t[i + p + 1] > t[i + 1]:
        out += (t[i + p + 1] - u) / (t[i + p + 1] - t[i + 1]) * cox_de_boor(t, i + 1, p - 1, u)
    return out


def element_stiffness(vertices, nu=1.0, lz=1.0):
    """nu/lz * area * grad N_i . grad N_j for one linear triangle."""
    area, G = hat_gradients(vertices)
    return nu / lz * area * G @ G.T


def box_qp(H, g, lo, up):
    """min 1/2 x'Hx + g'x on a box by enumerating all 3^n activity patterns.

    Each variable is at its lower bound, at its upper bound or free; the free
    block is solved exactly and the best feasible candidate is returned.
    """
    n = len(g)
    best, fbest = None, np.inf
    for pattern in itertools.product((0, 1, 2), repeat=n):
        x = np.zeros(n)
        fixed = np.array([s != 2 for s in pattern])
        for i, s in enumerate(pattern):
            if s == 0:
                x[i] = lo[i]
            elif s == 1:
                x[i] = up[i]
        free = ~fixed
        if free.any():
            rhs = -(g[free] + H[np.ix_(free, fixed)] @ x[fixed])
            x[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)
        if np.any(x < lo - 1e-12) or np.any(x > up + 1e-12):
            continue
        f = 0.5 * x @ H @ x + g @ x
        if f < fbest:
            best, fbest = x, f
    return best, fbest


def corner_max(values, grads, delta):
    """max over the corners of |d_i| <= delta_i of values + grads . d.

    ``values`` (N,), ``grads`` (N, n): evaluated by listing every corner.
    """
    n = len(delta)
    corners = np.array(list(itertools.product(*[(-d, d) for d in delta])))
    return values + (grads @ corners.T).max(axis=1) if n else values


def bilevel_grid(objective, constraint, lo, up, delta, n=41, levels=8, shrink=2.0):
    """Robust minimizer by an outer grid search with an inner corner max.

    ``objective(P)`` and ``constraint(P)`` take an (N, n) array and return
    ``(values, gradients)``. The outer grid of ``n`` points per axis is
    re-centred on the best feasible sample and shrunk to ``shrink`` grid
    spacings around it at every level.
    """
    lo, up = np.asarray(lo, float), np.asarray(up, float)
    best_p, best_f = None, np.inf
    for _ in range(levels):
        axes = [np.linspace(a, b, n) for a, b in zip(lo, up)]
        P = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
        jv, jg = objective(P)
        gv, gg = constraint(P)
        F = corner_max(jv, jg, delta)
        G = corner_max(gv, gg, delta)
        F = np.where(G <= 0.0, F, np.inf)
        k = int(np.argmin(F))
        if F[k] < best_f:
            best_p, best_f = P[k].copy(), float(F[k])
        h = (up - lo) / (n - 1)
        lo, up = best_p - shrink * h, best_p + shrink * h
    return best_p, best_f
