"""Linearized worst-case robustification with slack variables.

For deviations delta in the box U = {|delta_i| <= D_ii} the linearized worst
case of a function F is F(p) + ||D grad F(p)||_1. The norm terms are made
smooth by slack vectors: with z = (p, xi_0, ..., xi_M) the robust program is

    min  J(p) + 1'xi_0
    s.t. G_m(p) + 1'xi_m <= 0                 m = 1..M
         +-(D grad F_m(p))_i - xi_{m,i} <= 0   m = 0..M, i = 1..I

with F_0 = J and F_m = G_m. Every row of the base constraint set, box rows
included, is one G_m; the expanded problem itself has no box.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optimize import OptimizationProblem, OptimizationResult
from .params import UNBOUNDED, Constraint, ConstraintSet, UncertaintySet, as_params

HESSIAN_REL_STEP = 1e-5
MAX_ORACLE_PARAMS = 20


def half_widths(uset, n: int | None = None) -> np.ndarray:
    """Half-widths D_ii from an :class:`UncertaintySet` or a nonnegative vector.

    A plain vector may contain zeros (degenerate set U = {0} in that
    direction), which :class:`UncertaintySet` does not admit.
    """
    d = uset.delta if isinstance(uset, UncertaintySet) else np.asarray(uset, float).reshape(-1)
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise ValueError("uncertainty half-widths must be finite and nonnegative")
    if n is not None and d.size != n:
        raise ValueError(f"expected {n} half-widths, got {d.size}")
    return np.asarray(d, float)


def robust_objective(f, grad, p, uset) -> float:
    """f(p) + ||D grad f(p)||_1, the worst case of the linearization over U."""
    p = np.asarray(p, float)
    d = half_widths(uset, p.size)
    g = np.asarray(grad(p), float)
    return float(f(p) + np.sum(d * np.abs(g)))


def worst_case_oracle(f, grad, p, uset):
    """Maximize f(p) + grad f(p) . delta by enumerating the 2^I corners of U.

    Returns ``(value, delta)``; ties keep the first corner in enumeration
    order (all-positive first).
    """
    p = np.asarray(p, float)
    d = half_widths(uset, p.size)
    n = d.size
    if n > MAX_ORACLE_PARAMS:
        raise ValueError(f"corner enumeration limited to {MAX_ORACLE_PARAMS} parameters")
    g = np.asarray(grad(p), float)
    signs = 1.0 - 2.0 * ((np.arange(2**n)[:, None] >> np.arange(n)) & 1)
    corners = signs * d
    k = int(np.argmax(corners @ g))
    delta = corners[k]
    return float(f(p) + np.sum(g * delta)), delta


class _Curvature:
    """Gradients of J and of all constraint rows, and their Hessians by central
    differences of those gradients, cached for the last point."""

    def __init__(self, base: OptimizationProblem, rel: float):
        self.base, self.rel = base, rel
        self._key = None
        self._grads = None
        self._hess = None

    def _gradients(self, p, count: bool = False):
        if count:
            self.base.ledger.bump("gradient")
        gj = np.asarray(self.base.gradient(p), float)
        return np.vstack([gj[None, :], self.base.constraints.jacobian(p)])

    def gradients(self, p):
        key = p.tobytes()
        if self._key != key:
            self._key, self._grads, self._hess = key, self._gradients(p), None
        return self._grads

    def hessians(self, p):
        """(M + 1, I, I) array; slice [m, i, :] is grad of (grad F_m)_i."""
        self.gradients(p)
        if self._hess is None:
            n = p.size
            h = self.rel * np.maximum(np.abs(p), 1.0)
            cols = []
            for j in range(n):
                e = np.zeros(n)
                e[j] = h[j]
                cols.append((self._gradients(p + e, True) - self._gradients(p - e, True))
                            / (2 * h[j]))
            H = np.stack(cols, axis=-1)
            self._hess = 0.5 * (H + H.transpose(0, 2, 1))
        return self._hess


class RobustProblem(OptimizationProblem):
    """The slack-variable program as an :class:`OptimizationProblem` in z.

    ``split(z)`` returns ``(p, xi)`` with ``xi`` of shape (M + 1, I).
    """

    def __init__(self, base: OptimizationProblem, uset, rel_step: float = HESSIAN_REL_STEP):
        n = base.n_params
        self.base = base
        self.delta = half_widths(uset, n)
        self.n_rows = base.constraints.n_constraints
        self.curv = _Curvature(base, rel_step)
        for c in base.constraints.constraints:
            if c.grad is None:
                raise ValueError(f"constraint {c.name or c!r} has no analytic gradient")
        M = self.n_rows
        nz = n * (M + 2)
        rows = [Constraint(self._g_fun(m), self._g_grad(m), f"robust G{m + 1}",
                           self._row_expensive(m)) for m in range(M)]
        for m in range(M + 1):
            expensive = m > 0 and self._row_expensive(m - 1)
            for i in range(n):
                for sgn in (1.0, -1.0):
                    rows.append(Constraint(self._s_fun(m, i, sgn), self._s_grad(m, i, sgn),
                                           f"slack {m},{i},{'+' if sgn > 0 else '-'}",
                                           expensive))
        cs = ConstraintSet.box(np.full(nz, -UNBOUNDED), np.full(nz, UNBOUNDED), rows)
        p0 = base.constraints.project(base.p0)
        xi0 = np.abs(self.curv.gradients(p0) * self.delta)
        super().__init__(self._objective, self._gradient, cs,
                         np.concatenate([p0, xi0.reshape(-1)]),
                         (base.name + "_robust") if base.name else "robust", base.ledger)

    def _row_expensive(self, m) -> bool:
        k = len(self.base.constraints.constraints)
        return m < k and self.base.constraints.constraints[m].expensive

    def split(self, z):
        z = as_params(z)
        n = self.base.n_params
        return z[:n], z[n:].reshape(self.n_rows + 1, n)

    def _objective(self, z):
        p, xi = self.split(z)
        return float(self.base.objective(p)) + float(np.sum(xi[0]))

    def _gradient(self, z):
        p, _ = self.split(z)
        n = p.size
        out = np.zeros(z.size)
        out[:n] = self.curv.gradients(p)[0]
        out[n:2 * n] = 1.0
        return out

    def _g_fun(self, m):
        def fun(z):
            p, xi = self.split(z)
            return float(self.base.constraints.evaluate(p)[m]) + float(np.sum(xi[m + 1]))
        return fun

    def _g_grad(self, m):
        def grad(z):
            p, _ = self.split(z)
            n = p.size
            out = np.zeros(z.size)
            out[:n] = self.curv.gradients(p)[m + 1]
            out[n * (m + 2):n * (m + 3)] = 1.0
            return out
        return grad

    def _s_fun(self, m, i, sgn):
        def fun(z):
            p, xi = self.split(z)
            return sgn * self.delta[i] * self.curv.gradients(p)[m, i] - xi[m, i]
        return fun

    def _s_grad(self, m, i, sgn):
        def grad(z):
            p, _ = self.split(z)
            n = p.size
            out = np.zeros(z.size)
            if self.delta[i] != 0.0:
                out[:n] = sgn * self.delta[i] * self.curv.hessians(p)[m, i]
            out[n * (m + 1) + i] = -1.0
            return out
        return grad

    def base_result(self, res: OptimizationResult) -> OptimizationResult:
        """Result in the original parameters; ``f`` is the robust objective."""
        p, _ = self.split(res.p)
        return OptimizationResult(p=p.copy(), f=res.f, iterations=res.iterations,
                                  converged=res.converged, message=res.message,
                                  calls=dict(res.calls), history=res.history,
                                  multipliers=res.multipliers, kkt=res.kkt,
                                  iterations_to_best=res.iterations_to_best)


def robustify(prob: OptimizationProblem, uset, rel_step: float = HESSIAN_REL_STEP
              ) -> RobustProblem:
    return RobustProblem(prob, uset, rel_step)


def corner_margins(prob: OptimizationProblem, p, uset) -> np.ndarray:
    """Linearized worst-case constraint values max_delta G_m(p) + grad G_m . delta."""
    p = np.asarray(p, float)
    d = half_widths(uset, p.size)
    vals = prob.constraints.evaluate(p)
    jac = prob.constraints.jacobian(p)
    return np.array([vals[m] + np.sum(d * np.abs(jac[m])) for m in range(vals.size)])


@dataclass
class RobustPrice:
    nominal_objective: float
    robust_objective: float
    gap: float
    relative_gap: float
    nominal_worst_margin: np.ndarray
    robust_worst_margin: np.ndarray
    nominal_violates: bool
    robust_satisfies_all: bool

    def as_dict(self) -> dict:
        return {
            "nominal_objective": self.nominal_objective,
            "robust_objective": self.robust_objective,
            "gap": self.gap,
            "relative_gap": self.relative_gap,
            "nominal_worst_margin": [float(x) for x in self.nominal_worst_margin],
            "robust_worst_margin": [float(x) for x in self.robust_worst_margin],
            "nominal_violates": self.nominal_violates,
            "robust_satisfies_all": self.robust_satisfies_all,
        }


def robust_price(nominal: OptimizationResult, robust: OptimizationResult,
                 prob: OptimizationProblem, uset, tol: float = 1e-9) -> RobustPrice:
    """Compare nominal and robust optima.

    Objectives are the plain J at each minimizer; the margins are the
    linearized worst cases of every constraint row over the corners of U.
    """
    n = prob.n_params
    p_nom = np.asarray(nominal.p, float)[:n]
    p_rob = np.asarray(robust.p, float)[:n]
    j_nom = float(prob.objective(p_nom))
    j_rob = float(prob.objective(p_rob))
    m_nom = corner_margins(prob, p_nom, uset)
    m_rob = corner_margins(prob, p_rob, uset)
    gap = j_rob - j_nom
    return RobustPrice(j_nom, j_rob, gap, gap / abs(j_nom) if j_nom else np.inf,
                       m_nom, m_rob, bool(np.any(m_nom > tol)), bool(np.all(m_rob <= tol)))
