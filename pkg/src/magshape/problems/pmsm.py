"""PMSM post-processing: winding factor, EMF by the loading method, and the
magnet-size problem against a pluggable EMF evaluator.

Design vector p = (p1, p2, p3) in mm: magnet width, magnet height and
magnet position. The objective is the magnet volume p1 p2 l_z; with the
default ``l_z = 1`` it reads as the magnet cross-section in mm^2.

The full machine model is not part of this package; tests and demos use
:func:`synthetic_emf`, a linear surrogate calibrated to the initial design.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..params import UNBOUNDED, Constraint, ConstraintSet, linear_constraint

INITIAL_DESIGN_MM = (19.0, 7.0, 7.0)
INITIAL_EMF_V = 30.370
LOWER_MM = (1.0, 1.0, 5.0)
UPPER_MM = (UNBOUNDED, UNBOUNDED, 14.0)
# E0 = c1 p1 + c2 p2 (V, p in mm) with c1 19 + c2 7 = 30.370 V; c2 is chosen
# so that the nominal optimum of the surrogate has a magnet area of 63 mm^2.
_C2 = 1.43147
SYNTHETIC_EMF_COEFFS = ((INITIAL_EMF_V - 7.0 * _C2) / 19.0, _C2)

EmfEvaluator = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass(frozen=True)
class EmfConfig:
    """Machine data for the loading method.

    ``omega_syn`` is the electrical angular frequency (rad/s): E0 uses it
    directly, without another pole-pair factor. Angles in radians.
    """

    n_p: int = 3
    omega_syn: float = 2 * np.pi * 50
    n_w: float = 100.0
    q: int = 2
    alpha_el: float = np.pi / 6
    pitch_ratio: float = 1.0
    skew: float = 0.0
    r_ag: float = 0.04
    e_d: float = INITIAL_EMF_V
    lz: float = 1.0

    def __post_init__(self):
        if int(self.n_p) != self.n_p or self.n_p < 1:
            raise ValueError("pole-pair number must be a positive integer")
        if int(self.q) != self.q or self.q < 1:
            raise ValueError("q must be a positive integer")
        if not self.omega_syn > 0:
            raise ValueError("omega_syn must be positive")


def winding_factor(nu: int, cfg: EmfConfig) -> float:
    """Distribution, pitch and skew factor of harmonic ``nu``."""
    if int(nu) != nu or nu < 1:
        raise ValueError("harmonic order must be a positive integer")
    half = nu * cfg.alpha_el / 2
    den = cfg.q * np.sin(half)
    if abs(den) < 1e-14:
        raise ValueError(f"degenerate slot angle for harmonic {nu}")
    dist = np.sin(cfg.q * half) / den
    pitch = np.sin(nu * np.pi / 2 * cfg.pitch_ratio)
    x = nu * cfg.skew / 2
    skew = 1.0 if abs(x) < 1e-8 else np.sin(x) / x
    return float(dist * pitch * skew)


def fundamental(samples, phi, n_p: int):
    """Amplitude and phase of the n_p-th angular harmonic.

    ``samples`` at equally spaced angles ``phi`` covering whole periods of
    sin(n_p phi); returns ``(amp, phi_d)`` with
    samples ~ amp sin(n_p phi - phi_d).
    """
    a = np.asarray(samples, float).reshape(-1)
    phi = np.asarray(phi, float).reshape(-1)
    n = a.size
    if phi.size != n or n < 2:
        raise ValueError("need matching sample and angle arrays")
    step = phi[1] - phi[0]
    if not np.allclose(np.diff(phi), step, rtol=1e-9, atol=1e-12) or step <= 0:
        raise ValueError("angles must be equally spaced and increasing")
    periods = n_p * n * step / (2 * np.pi)
    m = int(round(periods))
    if m < 1 or abs(periods - m) > 1e-9:
        raise ValueError("samples must cover a whole number of periods of the harmonic")
    if n < 2 * m + 1:
        raise ValueError(f"{n} samples cannot resolve harmonic {n_p} on this span "
                         f"(need at least {2 * m + 1})")
    s = np.sin(n_p * phi)
    c = np.cos(n_p * phi)
    a_s = 2.0 / n * (a @ s)
    a_c = 2.0 / n * (a @ c)
    return float(np.hypot(a_s, a_c)), float(np.arctan2(-a_c, a_s))


def emf_loading(samples, phi, cfg: EmfConfig) -> float:
    """E0 = 2 A_eff omega_syn N_w k_w1 from A_z samples (Wb/m) on the air-gap arc."""
    amp, _ = fundamental(samples, phi, cfg.n_p)
    a_eff = amp / np.sqrt(2.0)
    return 2.0 * a_eff * cfg.omega_syn * cfg.n_w * winding_factor(1, cfg)


def synthetic_emf(coeffs=SYNTHETIC_EMF_COEFFS) -> EmfEvaluator:
    """Linear surrogate E0(p) = c1 p1 + c2 p2 (V) with its gradient."""
    c = np.array([coeffs[0], coeffs[1], 0.0])

    def evaluate(p):
        p = np.asarray(p, float)
        return float(c @ p), c.copy()
    return evaluate


class _EmfConstraint:
    """E_d - E0(p) <= 0 with one evaluator call shared by value and gradient."""

    def __init__(self, evaluator: EmfEvaluator, e_d: float):
        self.evaluator, self.e_d = evaluator, e_d
        self._last = None

    def _eval(self, p):
        p = np.asarray(p, float)
        if self._last is None or not np.array_equal(self._last[0], p):
            e, g = self.evaluator(p)
            self._last = (p.copy(), float(e), np.asarray(g, float))
        return self._last[1], self._last[2]

    def value(self, p):
        return self.e_d - self._eval(p)[0]

    def gradient(self, p):
        return -self._eval(p)[1]


def pmsm_constraints(emf: EmfEvaluator, cfg: EmfConfig) -> ConstraintSet:
    emf_c = _EmfConstraint(emf, cfg.e_d)
    general = (
        linear_constraint([0, 1, 1], 15.0, "p2 + p3 <= 15 mm"),
        linear_constraint([3, 0, -2], 50.0, "3 p1 - 2 p3 <= 50 mm"),
        Constraint(emf_c.value, emf_c.gradient, "E_d - E0 <= 0", expensive=True),
    )
    return ConstraintSet.box(LOWER_MM, UPPER_MM, general)


def magnet_volume(p, lz: float = 1.0):
    p = np.asarray(p, float)
    return float(p[0] * p[1] * lz), np.array([p[1] * lz, p[0] * lz, 0.0])


def pmsm_problem(emf: EmfEvaluator | None = None, cfg: EmfConfig | None = None, p0=None,
                 ledger=None):
    """Minimize p1 p2 l_z subject to bounds, two geometric limits and the EMF."""
    from ..optimize import OptimizationProblem
    cfg = cfg or EmfConfig()
    emf = emf or synthetic_emf()
    start = np.asarray(INITIAL_DESIGN_MM if p0 is None else p0, float)
    return OptimizationProblem(
        objective=lambda p: magnet_volume(p, cfg.lz)[0],
        gradient=lambda p: magnet_volume(p, cfg.lz)[1],
        constraints=pmsm_constraints(emf, cfg), p0=start, name="pmsm_synthetic",
        ledger=ledger)


def penalty_shape(t):
    """f(t) = exp(4 t^0.1) - 1 for t >= 0."""
    return float(np.expm1(4.0 * np.power(t, 0.1))) if t > 0 else 0.0


def pso_penalty_objective(p, problem) -> float:
    """J_pen = J (1 + 2 sum f(max(g, 0))) over the non-box constraints.

    Expensive constraints are evaluated only when all cheap ones hold.
    """
    p = np.asarray(p, float)
    J = problem.f(p)
    cheap = [c for c in problem.constraints.constraints if not c.expensive]
    costly = [c for c in problem.constraints.constraints if c.expensive]
    viol = [max(c(p), 0.0) for c in cheap]
    if all(v == 0.0 for v in viol):
        viol += [max(c(p), 0.0) for c in costly]
    return J + 2.0 * J * sum(penalty_shape(v) for v in viol)
