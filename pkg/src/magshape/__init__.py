"""Remeshing-free shape optimization for 2D magnetostatic FE models."""
from .ledger import Ledger
from .optimize import (OptimizationProblem, OptimizationResult, PsoSettings, SqpSettings,
                       pso_solve, qp_solve, sqp_solve)
from .params import Constraint, ConstraintSet, UncertaintySet, linear_constraint
from .robust import robust_objective, robust_price, robustify, worst_case_oracle

__version__ = "0.1.0"

__all__ = [
    "Constraint", "ConstraintSet", "Ledger", "OptimizationProblem", "OptimizationResult",
    "PsoSettings", "SqpSettings", "UncertaintySet", "linear_constraint", "pso_solve",
    "qp_solve", "robust_objective", "robust_price", "robustify", "sqp_solve",
    "worst_case_oracle",
]
