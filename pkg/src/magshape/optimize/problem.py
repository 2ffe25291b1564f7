"""Optimization problem wrapper with an instrumented call ledger."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..affine import AffineGeometryError
from ..ledger import Ledger
from ..nurbs_de import GeometryError
from ..params import ConstraintSet, as_params

INVALID_GEOMETRY = (GeometryError, AffineGeometryError)


class OptimizationProblem:
    """min J(p) subject to the constraint set, counted in ``ledger``.

    Invalid geometries are reported as J = +inf (and counted); gradients at
    such points raise :class:`GeometryError`.
    """

    def __init__(self, objective: Callable, gradient: Callable, constraints: ConstraintSet,
                 p0, name: str = "", ledger: Ledger | None = None):
        self.objective = objective
        self.gradient = gradient
        self.constraints = constraints
        self.p0 = as_params(p0, constraints.n_params)
        self.name = name
        self.ledger = ledger if ledger is not None else Ledger()
        self.invalid_evaluations = 0

    @classmethod
    def from_model(cls, model, constraints: ConstraintSet, p0, name: str = ""):
        """Wrap an object with ``objective``, ``gradient`` and ``ledger``."""
        return cls(model.objective, model.gradient, constraints, p0, name, model.ledger)

    @property
    def n_params(self) -> int:
        return self.constraints.n_params

    def f(self, p) -> float:
        self.ledger.bump("objective")
        try:
            return float(self.objective(np.asarray(p, float)))
        except INVALID_GEOMETRY:
            self.invalid_evaluations += 1
            return np.inf

    def grad(self, p) -> np.ndarray:
        self.ledger.bump("gradient")
        return np.asarray(self.gradient(np.asarray(p, float)), float)

    def g(self, p, include_expensive: bool = True) -> np.ndarray:
        self.ledger.bump("constraints")
        return self.constraints.evaluate(p, include_expensive)

    def g_jac(self, p) -> np.ndarray:
        return self.constraints.jacobian(p)

    def with_objective(self, objective: Callable, gradient: Callable | None = None,
                       name: str | None = None) -> "OptimizationProblem":
        """Same constraints and ledger, different objective (e.g. a penalty)."""
        def no_gradient(p):
            raise NotImplementedError("objective has no gradient")
        return OptimizationProblem(objective, gradient or no_gradient, self.constraints,
                                   self.p0, name or self.name, self.ledger)


@dataclass
class OptimizationResult:
    p: np.ndarray
    f: float
    iterations: int
    converged: bool
    message: str
    calls: dict
    history: list = field(default_factory=list)
    multipliers: np.ndarray | None = None
    kkt: float = np.nan
    iterations_to_best: int | None = None

    def summary(self) -> dict:
        return {
            "minimizer": [float(x) for x in self.p],
            "minimum": float(self.f),
            "iterations": int(self.iterations),
            "iterations_to_best": (None if self.iterations_to_best is None
                                   else int(self.iterations_to_best)),
            "converged": bool(self.converged),
            "message": self.message,
            "calls": dict(self.calls),
            "kkt": float(self.kkt),
        }


HISTORY_COLUMNS = ("iteration", "objective", "measure", "objective_calls", "gradient_calls",
                   "fe_solves")


def history_row(it: int, f: float, measure: float, ledger: Ledger) -> tuple:
    s = ledger.snapshot()
    return (it, f, measure, s["objective"], s["gradient"], s["fe_solves"])
