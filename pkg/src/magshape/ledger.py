"""Counting of expensive calls (objective, gradient, FE factorizations)."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field, fields


@dataclass
class Ledger:
    """Monotone call counters shared by a pipeline and its optimizer.

    ``fe_solves`` counts matrix factorizations (one per FE solution);
    ``back_substitutions`` counts extra right-hand sides solved with an
    existing factorization, e.g. sensitivity systems.
    """

    objective: int = 0
    gradient: int = 0
    constraints: int = 0
    fe_solves: int = 0
    back_substitutions: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False,
                                  compare=False)

    def bump(self, name: str, n: int = 1) -> None:
        with self._lock:
            setattr(self, name, getattr(self, name) + n)

    def snapshot(self) -> dict:
        with self._lock:
            return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "_lock"}

    def __getstate__(self):
        return self.snapshot()

    def __setstate__(self, state):
        self.__init__(**state)
