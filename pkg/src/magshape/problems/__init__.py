"""Benchmark problems: die press, synthetic PMSM, analytic test problems."""
from .die_press import DiePressConfig, DiePressModel, die_press_objective, die_press_problem
from .pmsm import (EmfConfig, emf_loading, pmsm_problem, pso_penalty_objective, synthetic_emf,
                   winding_factor)
from .synthetic import quadratic_problem, rosenbrock_problem

__all__ = [
    "DiePressConfig", "DiePressModel", "EmfConfig", "die_press_objective", "die_press_problem",
    "emf_loading", "pmsm_problem", "pso_penalty_objective", "quadratic_problem",
    "rosenbrock_problem", "synthetic_emf", "winding_factor",
]
