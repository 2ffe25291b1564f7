"""SQP with damped BFGS and an l1 merit line search."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import OptimizationProblem, OptimizationResult, history_row
from .qp import bfgs_damped_update, qp_solve


@dataclass(frozen=True)
class SqpSettings:
    """Knobs of :func:`sqp_solve`.

    ``penalty_factor`` is the merit-penalty growth rule: rho is raised to
    ``penalty_factor * max|lambda|`` whenever it falls below ``max|lambda|``
    times that factor. ``feasibility_tol`` is the constraint violation
    accepted at termination.
    """

    max_iterations: int = 100
    kkt_tol: float = 1e-8
    damping: float = 0.2
    penalty_factor: float = 1.5
    armijo: float = 1e-4
    max_halvings: int = 30
    feasibility_tol: float = 1e-10
    initial_hessian_scale: float = 1.0
    interpolation_margin: float = 1e-3
    max_stretch: float = 10.0

    def __post_init__(self):
        for name in ("kkt_tol", "damping", "armijo", "feasibility_tol",
                     "initial_hessian_scale", "interpolation_margin"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_stretch < 1:
            raise ValueError("max_stretch must be at least 1")
        if self.max_iterations < 1 or self.max_halvings < 1:
            raise ValueError("iteration limits must be positive")
        if self.penalty_factor < 1:
            raise ValueError("penalty_factor must be at least 1")
        if self.damping >= 1:
            raise ValueError("damping must be below 1")


def kkt_residual(g, A, c, lam) -> float:
    """max of ||g + A'lam||_inf, max(c, 0) and max|lam c|."""
    stat = g + A.T @ lam if A.size else g
    parts = [np.abs(stat).max(initial=0.0)]
    if c.size:
        parts += [np.maximum(c, 0.0).max(), np.abs(lam * c).max()]
    return float(max(parts))


def _violation(c) -> float:
    return float(np.maximum(c, 0.0).sum()) if c.size else 0.0


def _backtrack(alpha, phi0, dphi, phi, first):
    """Next trial step: the parabola minimum (kept in [alpha/10, alpha/2])
    after the first rejection, plain halving afterwards or when the merit
    is not finite."""
    if first and np.isfinite(phi) and dphi < 0:
        curv = (phi - phi0 - dphi * alpha) / alpha**2
        if curv > 0:
            return float(np.clip(-dphi / (2.0 * curv), 0.1 * alpha, 0.5 * alpha))
    return 0.5 * alpha


def _stretch_limit(c, Ad, scale, cap, tol):
    """Largest alpha in [1, cap] with c + alpha Ad <= tol for all rows.

    Rows with Ad at roundoff level relative to ``scale`` (the row norms
    times |d|) are rows held active by the QP and do not limit the step.
    """
    a = cap
    for ci, di, si in zip(c, Ad, scale):
        if di > 1e-12 * si:
            a = min(a, (tol - ci) / di)
    return max(a, 1.0)


def sqp_solve(prob: OptimizationProblem, settings: SqpSettings | None = None,
              callback=None) -> OptimizationResult:
    """Minimize ``prob`` by SQP; box rows enter the QP as linear constraints.

    Returns the last iterate on convergence. When the line search fails or
    the iteration cap is hit the best feasible iterate seen so far (lowest
    merit otherwise) is returned with ``converged=False``.
    """
    s = settings or SqpSettings()
    cs = prob.constraints
    p = cs.project(prob.p0)
    f = prob.f(p)
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the initial point")
    g = prob.grad(p)
    c = prob.g(p)
    A = prob.g_jac(p)
    n = p.size
    H = s.initial_hessian_scale * np.eye(n)
    rho = 0.0
    lam = np.zeros(c.size)
    history = [history_row(0, f, np.nan, prob.ledger)]
    best = (p.copy(), f, c.copy())
    first_update = True
    message, converged, kkt = "iteration limit reached", False, np.nan
    it = 0

    def better(pc, fc, cc):
        bp, bf, bc = best
        vc, vb = _violation(cc), _violation(bc)
        if vc <= s.feasibility_tol and vb <= s.feasibility_tol:
            return fc < bf
        return vc < vb

    for it in range(1, s.max_iterations + 1):
        qp = qp_solve(H, g, A, -c)
        d, lam_qp = qp.x, qp.lam
        kkt = kkt_residual(g, A, c, lam_qp)
        history[-1] = history[-1][:2] + (kkt,) + history[-1][3:]
        if kkt <= s.kkt_tol and _violation(c) <= s.feasibility_tol:
            lam = lam_qp
            converged, message = True, "KKT tolerance reached"
            it -= 1
            break
        if np.abs(d).max() <= 1e-15 * (1.0 + np.abs(p).max()):
            lam = lam_qp
            converged = _violation(c) <= s.feasibility_tol
            message = "step vanished" if converged else "step vanished at infeasible point"
            it -= 1
            break
        if lam_qp.size:
            rho = max(rho, s.penalty_factor * np.abs(lam_qp).max())
        phi0 = f + rho * _violation(c)
        dphi = float(g @ d) - rho * _violation(c)
        # merit changes below rounding level cannot be resolved near the optimum
        noise = 10.0 * np.finfo(float).eps * (abs(f) + 1.0)
        if qp.relaxed:
            rho *= 10.0
            phi0 = f + rho * _violation(c)
            dphi = min(dphi, float(g @ d) - rho * _violation(c))
        alpha, accepted = 1.0, False
        for k in range(s.max_halvings + 1):
            p_new = p + alpha * d
            f_new = prob.f(p_new)
            phi = np.inf
            if np.isfinite(f_new):
                c_new = prob.g(p_new)
                phi = f_new + rho * _violation(c_new)
                if phi <= phi0 + s.armijo * alpha * min(dphi, 0.0) + noise:
                    accepted = True
                    break
            alpha = _backtrack(alpha, phi0, dphi, phi, first=k == 0)
        if not accepted:
            message = "line search failed"
            break
        if -dphi > 1e4 * noise:
            # the accepted step is replaced by the minimum of the parabola
            # through phi(0), phi'(0) and phi(alpha) when that lowers the
            # merit; this makes the search exact on quadratics (finite
            # termination). Steps are stretched only as far as the
            # linearized constraints allow, and not at all once the
            # predicted decrease is at roundoff level.
            curv = (phi - phi0 - dphi * alpha) / alpha**2
            a_q = -dphi / (2.0 * curv) if curv > 0 else alpha
            a_q = min(a_q, _stretch_limit(c, A @ d, np.abs(A) @ np.abs(d), s.max_stretch, 0.0))
            if abs(a_q / alpha - 1.0) > s.interpolation_margin:
                p_q = p + a_q * d
                f_q = prob.f(p_q)
                if np.isfinite(f_q):
                    c_q = prob.g(p_q)
                    if f_q + rho * _violation(c_q) < phi:
                        p_new, f_new, c_new = p_q, f_q, c_q
        g_new = prob.grad(p_new)
        A_new = prob.g_jac(p_new)
        step = p_new - p
        if not np.any(step):
            converged = _violation(c) <= s.feasibility_tol
            message = "step vanished" if converged else "step vanished at infeasible point"
            lam = lam_qp
            break
        y = (g_new + A_new.T @ lam_qp) - (g + A.T @ lam_qp)
        if first_update:
            # rescale to the curvature along the first step; the Rayleigh
            # quotient does not overestimate, so exact line searches keep
            # step lengths near one and the damping stays inactive on
            # convex quadratics
            sy = float(step @ y)
            if sy > 0:
                H = (sy / float(step @ step)) * np.eye(n)
            first_update = False
        H = bfgs_damped_update(H, step, y, s.damping)
        p, f, g, c, A, lam = p_new, f_new, g_new, c_new, A_new, lam_qp
        history.append(history_row(it, f, np.nan, prob.ledger))
        if better(p, f, c):
            best = (p.copy(), f, c.copy())
        if callback is not None:
            callback(it, p, f)

    if not converged:
        p, f, _ = best
    return OptimizationResult(p=p.copy(), f=float(f), iterations=it, converged=converged,
                              message=message, calls=prob.ledger.snapshot(),
                              history=history, multipliers=lam, kkt=float(kkt),
                              iterations_to_best=None)
