"""Design parameters, constraints, the admissible set and the uncertainty set."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

UNBOUNDED = np.inf
FD_REL_STEP = 1e-6


def as_params(p, n: int | None = None) -> np.ndarray:
    """Validate a design vector: 1-D, finite, optional fixed length."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"design vector must be 1-D and nonempty, got shape {p.shape}")
    if n is not None and p.size != n:
        raise ValueError(f"design vector has length {p.size}, expected {n}")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"design vector has non-finite entries: {p}")
    return p


def fd_step(p: np.ndarray, rel: float) -> np.ndarray:
    return rel * np.maximum(np.abs(p), 1.0)


def central_gradient(f: Callable[[np.ndarray], float], p: np.ndarray,
                     rel: float = FD_REL_STEP) -> np.ndarray:
    h = fd_step(p, rel)
    g = np.empty_like(p)
    for i in range(p.size):
        e = np.zeros_like(p)
        e[i] = h[i]
        g[i] = (f(p + e) - f(p - e)) / (2 * h[i])
    return g


@dataclass(frozen=True)
class Constraint:
    """Scalar constraint G(p) <= 0.

    Without ``grad`` the gradient falls back to central differences.
    ``expensive`` marks constraints whose evaluation needs a field solve.
    """

    fun: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = ""
    expensive: bool = False

    def __call__(self, p) -> float:
        return float(self.fun(p))

    def gradient(self, p) -> np.ndarray:
        p = np.asarray(p, float)
        if self.grad is not None:
            return np.asarray(self.grad(p), dtype=float)
        return central_gradient(self, p)


def linear_constraint(a: Sequence[float], b: float, name: str = "") -> Constraint:
    """a . p - b <= 0."""
    a = np.asarray(a, dtype=float)
    a.flags.writeable = False
    return Constraint(lambda p: float(a @ p) - b, lambda p: a.copy(), name)


@dataclass(frozen=True)
class ConstraintSet:
    """General constraints plus box bounds (``UNBOUNDED`` means no bound).

    The box is part of :meth:`evaluate` as the rows ``l - p <= 0`` followed by
    ``p - u <= 0``, finite bounds only.
    """

    lower: np.ndarray
    upper: np.ndarray
    constraints: tuple[Constraint, ...] = field(default_factory=tuple)

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).copy()
        up = np.asarray(self.upper, dtype=float).copy()
        if lo.shape != up.shape or lo.ndim != 1:
            raise ValueError("lower and upper bounds must be 1-D of equal length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(up)):
            raise ValueError("bounds must not be NaN")
        if np.any(lo > up):
            i = int(np.flatnonzero(lo > up)[0])
            raise ValueError(f"lower bound exceeds upper bound for parameter {i}: "
                             f"{lo[i]} > {up[i]}")
        lo.flags.writeable = False
        up.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)
        object.__setattr__(self, "constraints", tuple(self.constraints))

    @classmethod
    def box(cls, lower, upper, constraints=()) -> "ConstraintSet":
        return cls(np.asarray(lower, float), np.asarray(upper, float), tuple(constraints))

    @property
    def n_params(self) -> int:
        return self.lower.size

    def _box_rows(self):
        lo_idx = np.flatnonzero(np.isfinite(self.lower))
        up_idx = np.flatnonzero(np.isfinite(self.upper))
        return lo_idx, up_idx

    @property
    def n_constraints(self) -> int:
        lo_idx, up_idx = self._box_rows()
        return len(self.constraints) + len(lo_idx) + len(up_idx)

    def evaluate(self, p, include_expensive: bool = True) -> np.ndarray:
        """Constraint values: general constraints first, then box rows.

        With ``include_expensive=False`` expensive entries are reported as NaN.
        """
        p = as_params(p, self.n_params)
        lo_idx, up_idx = self._box_rows()
        vals = [c(p) if include_expensive or not c.expensive else np.nan
                for c in self.constraints]
        return np.concatenate([np.asarray(vals, float), self.lower[lo_idx] - p[lo_idx],
                               p[up_idx] - self.upper[up_idx]])

    def jacobian(self, p) -> np.ndarray:
        p = as_params(p, self.n_params)
        lo_idx, up_idx = self._box_rows()
        n = self.n_params
        rows = [c.gradient(p) for c in self.constraints]
        rows += [-np.eye(n)[i] for i in lo_idx]
        rows += [np.eye(n)[i] for i in up_idx]
        return np.array(rows, dtype=float).reshape(-1, n)

    def general_jacobian(self, p) -> np.ndarray:
        p = as_params(p, self.n_params)
        return np.array([c.gradient(p) for c in self.constraints],
                        dtype=float).reshape(-1, self.n_params)

    def is_feasible(self, p, tol: float = 0.0) -> bool:
        return bool(np.all(self.evaluate(p) <= tol))

    def in_box(self, p, tol: float = 0.0) -> bool:
        p = np.asarray(p, float)
        return bool(np.all(p >= self.lower - tol) and np.all(p <= self.upper + tol))

    def project(self, p) -> np.ndarray:
        return np.clip(as_params(p, self.n_params), self.lower, self.upper)

    def with_box(self, lower=None, upper=None) -> "ConstraintSet":
        return ConstraintSet(self.lower if lower is None else lower,
                             self.upper if upper is None else upper, self.constraints)


def evaluate_constraints(cs: ConstraintSet, p) -> np.ndarray:
    return cs.evaluate(p)


def project_to_box(cs: ConstraintSet, p) -> np.ndarray:
    return cs.project(p)


@dataclass(frozen=True)
class UncertaintySet:
    """Box of deviations {delta : |delta_i| <= D_ii}."""

    delta: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.delta, dtype=float).reshape(-1).copy()
        if d.size == 0 or not np.all(np.isfinite(d)) or np.any(d <= 0):
            raise ValueError("uncertainty half-widths must be finite and positive")
        d.flags.writeable = False
        object.__setattr__(self, "delta", d)

    @classmethod
    def uniform(cls, value: float, n: int) -> "UncertaintySet":
        return cls(np.full(n, float(value)))

    @property
    def D(self) -> np.ndarray:
        return np.diag(self.delta)

    def contains(self, dev, tol: float = 0.0) -> bool:
        return bool(np.max(np.abs(np.asarray(dev, float)) / self.delta) <= 1.0 + tol)

    def corners(self) -> np.ndarray:
        """All 2^I sign patterns scaled by the half-widths."""
        n = self.delta.size
        signs = 1.0 - 2.0 * ((np.arange(2**n)[:, None] >> np.arange(n)) & 1)
        return signs * self.delta
