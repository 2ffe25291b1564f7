"""SQP, PSO and the QP subproblem."""
from .problem import HISTORY_COLUMNS, INVALID_GEOMETRY, OptimizationProblem, OptimizationResult
from .pso import PsoSettings, make_rng, pso_solve
from .qp import QpResult, bfgs_damped_update, qp_solve
from .sqp import SqpSettings, kkt_residual, sqp_solve

__all__ = [
    "HISTORY_COLUMNS", "INVALID_GEOMETRY", "OptimizationProblem", "OptimizationResult",
    "PsoSettings", "QpResult", "SqpSettings", "bfgs_damped_update", "kkt_residual",
    "make_rng", "pso_solve", "qp_solve", "sqp_solve",
]
