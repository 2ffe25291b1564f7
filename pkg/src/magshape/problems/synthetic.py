"""Analytic test problems for the optimizers and the robust reformulation."""
from __future__ import annotations

import numpy as np

from ..params import UNBOUNDED, ConstraintSet, linear_constraint

# min ||p - c||^2 s.t. a.p <= b; the I = 2 case is the textbook robust example
QUADRATIC_2D = ((1.0, -1.0), (1.0, 1.0), 0.0)
QUADRATIC_3D = ((1.0, -1.0, 0.5), (1.0, 1.0, 1.0), 0.2)


def quadratic_problem(center=QUADRATIC_3D[0], a=QUADRATIC_3D[1], b=QUADRATIC_3D[2],
                      p0=None, lower=None, upper=None, ledger=None):
    """min ||p - center||^2 subject to a.p <= b (and an optional box)."""
    from ..optimize import OptimizationProblem
    c = np.asarray(center, float)
    n = c.size
    lo = np.full(n, -UNBOUNDED) if lower is None else lower
    up = np.full(n, UNBOUNDED) if upper is None else upper
    cs = ConstraintSet.box(lo, up, [linear_constraint(a, b, "a.p <= b")])
    return OptimizationProblem(lambda p: float(np.sum((p - c) ** 2)), lambda p: 2.0 * (p - c),
                               cs, np.zeros(n) if p0 is None else p0, "quadratic", ledger)


def rosenbrock_problem(a: float = 1.0, b: float = 100.0, p0=(-1.2, 1.0), box=5.0):
    from ..optimize import OptimizationProblem

    def f(p):
        return float((a - p[0]) ** 2 + b * (p[1] - p[0] ** 2) ** 2)

    def g(p):
        return np.array([-2 * (a - p[0]) - 4 * b * p[0] * (p[1] - p[0] ** 2),
                         2 * b * (p[1] - p[0] ** 2)])
    cs = ConstraintSet.box([-box, -box], [box, box])
    return OptimizationProblem(f, g, cs, p0, "rosenbrock")
