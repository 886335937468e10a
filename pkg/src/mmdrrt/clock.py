"""Time sources for planner budgets.

``WallClock`` measures real elapsed time. ``WorkClock`` measures virtual time
from work counters (collision checks and planner iterations), so a run with a
given seed reproduces exactly, including every reported timestamp. Its default
constants roughly track wall time with the compiled kernels on a desktop core.
"""

from __future__ import annotations

import time

CHECK_COST_S = 4e-6
TICK_COST_S = 6e-5


class WallClock:
    kind = "wall"

    def __init__(self, checker=None):
        self._t0 = time.perf_counter()

    def tick(self, n: int = 1):
        pass

    def elapsed(self) -> float:
        return time.perf_counter() - self._t0


class WorkClock:
    """Deterministic virtual clock: checks * check_cost + ticks * tick_cost."""

    kind = "work"

    def __init__(self, checker=None, check_cost: float = CHECK_COST_S, tick_cost: float = TICK_COST_S):
        self.checkers = [] if checker is None else [checker]
        self.check_cost = check_cost
        self.tick_cost = tick_cost
        self._c0 = [c.n_checks for c in self.checkers]
        self.ticks = 0

    def attach(self, checker):
        self.checkers.append(checker)
        self._c0.append(checker.n_checks)

    def tick(self, n: int = 1):
        self.ticks += n

    @property
    def checks(self) -> int:
        return sum(c.n_checks - c0 for c, c0 in zip(self.checkers, self._c0))

    def elapsed(self) -> float:
        return self.checks * self.check_cost + self.ticks * self.tick_cost


def make_clock(kind: str, checker=None):
    if kind == "wall":
        return WallClock(checker)
    if kind == "work":
        return WorkClock(checker)
    raise ValueError(f"unknown clock {kind!r}")
