"""Particle swarm optimization with box projection and constraint handling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay

from .problem import OptimizationProblem, OptimizationResult, history_row

CONSTRAINT_MODES = ("reject", "penalty", "none")


@dataclass(frozen=True)
class PsoSettings:
    """Swarm constants and termination limits.

    ``constraint_mode``: "reject" gives infeasible particles J = +inf without
    evaluating the objective; "penalty" and "none" leave constraint handling
    to the objective. ``hull_skip`` trusts points inside the convex hull of
    already accepted feasible points (valid for convex admissible sets).
    """

    swarm_size: int = 40
    omega0: float = 0.5
    omega1: float = 1.49
    omega2: float = 1.49
    stall_limit: int = 15
    cluster_tol: float = 1e-6
    max_iterations: int = 100
    seed: int = 0
    constraint_mode: str = "reject"
    hull_skip: bool = False

    def __post_init__(self):
        if self.swarm_size < 2:
            raise ValueError("swarm size must be at least 2")
        if not 0.0 <= self.omega0 < 1.0 and not (self.omega0 == 1.0 and self.omega1 == 0
                                                   and self.omega2 == 0):
            raise ValueError("omega0 must lie in [0, 1)")
        if self.omega1 < 0 or self.omega2 < 0:
            raise ValueError("omega1 and omega2 must be nonnegative")
        if self.stall_limit < 1 or self.max_iterations < 1:
            raise ValueError("iteration limits must be positive")
        if not self.cluster_tol > 0:
            raise ValueError("cluster_tol must be positive")
        if self.constraint_mode not in CONSTRAINT_MODES:
            raise ValueError(f"constraint_mode must be one of {CONSTRAINT_MODES}")


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; streams are identical across platforms."""
    return np.random.Generator(np.random.Philox(int(seed)))


class _Feasibility:
    """Constraint check with cheap constraints first and an optional hull test."""

    def __init__(self, prob: OptimizationProblem, hull_skip: bool):
        self.prob, self.hull_skip = prob, hull_skip
        cons = prob.constraints.constraints
        self.cheap = [c for c in cons if not c.expensive]
        self.costly = [c for c in cons if c.expensive]
        self.accepted: list[np.ndarray] = []
        self._hull = None
        self.skipped = 0

    def _in_hull(self, p) -> bool:
        if not self.hull_skip or len(self.accepted) < p.size + 1:
            return False
        if self._hull is None:
            try:
                self._hull = Delaunay(np.array(self.accepted))
            except Exception:   # degenerate (flat) point cloud
                return False
        return bool(self._hull.find_simplex(p) >= 0)

    def __call__(self, p) -> bool:
        if not self.prob.constraints.in_box(p):
            return False
        if not self.cheap and not self.costly:
            return True
        if any(c(p) > 0 for c in self.cheap):
            return False
        if self.costly:
            if self._in_hull(p):
                self.skipped += 1
                return True
            self.prob.ledger.bump("constraints")
            if any(c(p) > 0 for c in self.costly):
                return False
        if self.hull_skip:
            self.accepted.append(np.array(p, float))
            self._hull = None
        return True


def pso_solve(prob: OptimizationProblem, settings: PsoSettings | None = None,
              map_fn=None) -> OptimizationResult:
    """Constrained PSO; the box must be finite.

    ``map_fn(f, points)`` may evaluate the objective concurrently; it must
    return values in input order (``map`` semantics). The swarm best is
    reduced in particle order so results do not depend on scheduling.
    """
    s = settings or PsoSettings()
    cs = prob.constraints
    lo, up = cs.lower, cs.upper
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(up))):
        raise ValueError("PSO needs a finite box")
    if np.any(up <= lo):
        raise ValueError("admissible box has empty interior")
    rng = make_rng(s.seed)
    Q, n = s.swarm_size, lo.size
    feasible = _Feasibility(prob, s.hull_skip) if s.constraint_mode == "reject" else None
    evaluate = map_fn or (lambda fn, pts: list(map(fn, pts)))

    # uniform initialization, rejecting infeasible draws
    x = np.empty((Q, n))
    filled, draws = 0, 0
    while filled < Q:
        if draws >= 10 * Q and filled == 0:
            raise ValueError(f"no feasible particle in {draws} draws; admissible set empty?")
        cand = lo + (up - lo) * rng.random(n)
        draws += 1
        if feasible is None or feasible(cand):
            x[filled] = cand
            filled += 1
        elif draws >= 10 * Q and filled > 0:
            # keep the feasible ones, fill the rest with copies of them
            x[filled:] = x[rng.integers(0, filled, Q - filled)]
            filled = Q
    v = np.zeros((Q, n))

    def objective(points, mask):
        vals = np.full(len(points), np.inf)
        idx = np.flatnonzero(mask)
        if idx.size:
            vals[idx] = evaluate(prob.f, [points[i] for i in idx])
        return vals

    fx = objective(x, np.ones(Q, bool))
    pbest, fbest = x.copy(), fx.copy()
    q = int(np.argmin(fbest))           # first index on ties
    gbest, fg = pbest[q].copy(), float(fbest[q])
    history = [history_row(0, fg, _spread(gbest, x), prob.ledger)]
    it_best, stall, it = 0, 0, 0
    message = "iteration limit reached"
    for it in range(1, s.max_iterations + 1):
        r1 = rng.random((Q, n))
        r2 = rng.random((Q, n))
        v = s.omega0 * v + s.omega1 * r1 * (pbest - x) + s.omega2 * r2 * (gbest - x)
        x = np.clip(x + v, lo, up)
        mask = np.array([feasible(xi) for xi in x]) if feasible is not None else np.ones(Q, bool)
        fx = objective(x, mask)
        improved = fx < fbest
        pbest[improved], fbest[improved] = x[improved], fx[improved]
        q = int(np.argmin(fbest))
        if fbest[q] < fg:
            gbest, fg = pbest[q].copy(), float(fbest[q])
            it_best, stall = it, 0
        else:
            stall += 1
        spread = _spread(gbest, x)
        history.append(history_row(it, fg, spread, prob.ledger))
        if spread < s.cluster_tol:
            message = "swarm clustered"
            break
        if stall >= s.stall_limit:
            message = f"no improvement in {s.stall_limit} iterations"
            break
    converged = np.isfinite(fg) and message != "iteration limit reached"
    res = OptimizationResult(p=gbest.copy(), f=fg, iterations=it, converged=bool(converged),
                             message=message, calls=prob.ledger.snapshot(), history=history,
                             kkt=np.nan, iterations_to_best=it_best)
    if feasible is not None:
        res.calls["hull_skips"] = feasible.skipped
    return res


def _spread(gbest, x) -> float:
    """(1/Q) sum_q ||gbest - x_q||_2."""
    return float(np.linalg.norm(x - gbest, axis=1).mean())
