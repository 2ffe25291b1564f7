"""Convex QP subproblem and damped BFGS update.

``qp_solve`` is a primal active-set method for

    min 1/2 x'Hx + g'x   subject to   A x <= b

with H positive definite. A feasible start comes from the unconstrained
minimizer, the origin, or an LP phase one (``scipy.optimize.linprog``).
Infeasible programs are replaced by an elastic relaxation with penalized
slacks and flagged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

QP_TOL = 1e-10


@dataclass
class QpResult:
    x: np.ndarray
    lam: np.ndarray
    active: np.ndarray
    relaxed: bool = False
    iterations: int = 0
    kkt: float = 0.0

    def __iter__(self):
        yield self.x
        yield self.lam


def qp_kkt_residual(H, g, A, b, x, lam) -> float:
    """max of stationarity, primal infeasibility, dual infeasibility, complementarity."""
    r = H @ x + g
    if A.shape[0]:
        r = r + A.T @ lam
        slack = A @ x - b
        return float(max(np.abs(r).max(initial=0.0), slack.max(initial=0.0),
                         (-lam).max(initial=0.0), np.abs(lam * slack).max(initial=0.0)))
    return float(np.abs(r).max(initial=0.0))


def _feasible_start(H, g, A, b, tol):
    x = -np.linalg.solve(H, g)
    if np.all(A @ x <= b + tol):
        return x
    x = np.zeros_like(g)
    if np.all(b >= -tol):
        return x
    res = linprog(np.zeros(len(g)), A_ub=A, b_ub=b, bounds=[(None, None)] * len(g),
                  method="highs")
    if res.status != 0:
        return None
    x = res.x
    return x if np.all(A @ x <= b + 1e-9 * (1 + np.abs(b).max())) else None


def _active_set(H, g, A, b, x, tol, max_iter):
    n = len(g)
    # start with the constraints that are tight at x
    work: list[int] = []
    scale = 1.0 + np.abs(b)
    for i in np.flatnonzero(np.abs(A @ x - b) <= tol * scale):
        cand = work + [int(i)]
        if np.linalg.matrix_rank(A[cand]) == len(cand):
            work = cand
    mu = np.zeros(0)
    for it in range(1, max_iter + 1):
        k = len(work)
        Aw = A[work]
        K = np.zeros((n + k, n + k))
        K[:n, :n] = H
        K[:n, n:] = Aw.T
        K[n:, :n] = Aw
        rhs = np.concatenate([-(H @ x + g), np.zeros(k)])
        sol = np.linalg.solve(K, rhs)
        step, mu = sol[:n], sol[n:]
        if k == n:
            step = np.zeros(n)     # a vertex; the solve only returns roundoff
        if np.linalg.norm(step) <= 1e-12 * (1 + np.linalg.norm(x)):
            if k == 0 or mu.min() >= -tol:
                return x, work, mu, it
            work.pop(int(np.argmin(mu)))
            continue
        alpha, block = 1.0, -1
        Ad = A @ step
        slack = b - A @ x
        for i in np.flatnonzero(Ad > 1e-14 * (1 + np.abs(A).max())):
            if i in work:
                continue
            a = max(slack[i], 0.0) / Ad[i]
            if a < alpha:
                alpha, block = a, int(i)
        x = x + alpha * step
        if block >= 0:
            work.append(block)
    raise RuntimeError("QP active-set iteration limit reached")


def qp_solve(H, g, A=None, b=None, tol: float = QP_TOL, max_iter: int | None = None,
             elastic_weight: float | None = None) -> QpResult:
    """Solve the convex QP; returns step, multipliers (>= 0) and flags."""
    H = np.atleast_2d(np.asarray(H, float))
    g = np.asarray(g, float).reshape(-1)
    n = g.size
    if H.shape != (n, n):
        raise ValueError(f"H has shape {H.shape}, expected {(n, n)}")
    A = np.zeros((0, n)) if A is None else np.atleast_2d(np.asarray(A, float)).reshape(-1, n)
    b = np.zeros(0) if b is None else np.asarray(b, float).reshape(-1)
    if A.shape[0] != b.size:
        raise ValueError("A and b have inconsistent sizes")
    H = 0.5 * (H + H.T)
    max_iter = max_iter or 50 * (n + A.shape[0] + 1)
    x0 = _feasible_start(H, g, A, b, tol)
    if x0 is not None:
        x, work, mu, it = _active_set(H, g, A, b, x0, tol, max_iter)
        lam = np.zeros(A.shape[0])
        lam[work] = mu
        lam = np.maximum(lam, 0.0)
        return QpResult(x, lam, np.array(sorted(work), int), False, it,
                        qp_kkt_residual(H, g, A, b, x, lam))
    return _elastic(H, g, A, b, tol, max_iter, elastic_weight)


def _elastic(H, g, A, b, tol, max_iter, weight):
    """min 1/2 x'Hx + g'x + w 1's + eps/2 s's  s.t.  A x - s <= b, s >= 0."""
    n, m = g.size, A.shape[0]
    w = weight if weight is not None else 1e3 * (1.0 + np.abs(g).max(initial=0.0))
    eps = 1e-8 * max(np.abs(np.diag(H)).max(), 1.0)
    He = np.zeros((n + m, n + m))
    He[:n, :n] = H
    He[n:, n:] = eps * np.eye(m)
    ge = np.concatenate([g, np.full(m, w)])
    Ae = np.block([[A, -np.eye(m)], [np.zeros((m, n)), -np.eye(m)]])
    be = np.concatenate([b, np.zeros(m)])
    z0 = np.concatenate([np.zeros(n), np.maximum(-b, 0.0)])
    z, work, mu, it = _active_set(He, ge, Ae, be, z0, tol, max_iter)
    lam_e = np.zeros(2 * m)
    lam_e[work] = mu
    lam = np.maximum(lam_e[:m], 0.0)
    x = z[:n]
    return QpResult(x, lam, np.array(sorted(i for i in work if i < m), int), True, it,
                    qp_kkt_residual(He, ge, Ae, be, z, np.maximum(lam_e, 0.0)))


def bfgs_damped_update(H, dp, dg, damping: float = 0.2) -> np.ndarray:
    """BFGS update with Powell damping; keeps H symmetric positive definite.

    With s = dp, y = dg: if s'y >= damping s'Hs the plain update is used,
    otherwise y is replaced by theta y + (1 - theta) H s.
    """
    H = np.asarray(H, float)
    s = np.asarray(dp, float)
    y = np.asarray(dg, float)
    if not np.linalg.norm(s) > 0:
        raise ValueError("step must be nonzero")
    Hs = H @ s
    sHs = float(s @ Hs)
    sy = float(s @ y)
    if sy >= damping * sHs:
        r = y
    else:
        theta = (1.0 - damping) * sHs / (sHs - sy)
        r = theta * y + (1.0 - theta) * Hs
    Hn = H - np.outer(Hs, Hs) / sHs + np.outer(r, r) / float(s @ r)
    return 0.5 * (Hn + Hn.T)
