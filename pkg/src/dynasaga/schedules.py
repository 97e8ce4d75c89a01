"""Sample-size schedules M(t) and the Alternating sampling rule.

Iterations ``t`` are 1-based. Sample indices handed to the optimizers are
0-based, so the sample added when the active size grows to ``m`` has
index ``m - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

FIXED = "fixed"
LINEAR = "linear"
ALTERNATING = "alternating"
EXPLICIT = "explicit"


@dataclass(frozen=True)
class SampleAction:
    m: int
    forced: Optional[int] = None  # 0-based index to update, or None for uniform over the prefix

    @property
    def uniform(self) -> bool:
        return self.forced is None


def linear_size(t: int, kappa0: int, n: int, double_floor: bool = False) -> int:
    """min(n, max(kappa0, ceil(t/2))); ``double_floor`` floors at 2*kappa0 instead."""
    if t < 1:
        raise ValueError("t must be >= 1")
    floor = 2 * kappa0 if double_floor else kappa0
    return min(n, max(floor, (t + 1) // 2))


def fixed_size(t: int, m: int) -> int:
    return m


def alternating_size(t: int, kappa0: int, n: int) -> int:
    warm = 2 * kappa0
    if t <= warm:
        return min(kappa0, n)
    return min(n, kappa0 + (t - warm + 1) // 2)


def alternating_action(t: int, current_m: int, kappa0: int, n: int):
    """Return ``(new_m, action)`` for step t.

    After a warm start of 2*kappa0 steps at size kappa0, odd steps of the
    remaining phase add one sample and force an update on it; even steps
    sample uniformly from the current prefix.
    """
    if t <= 2 * kappa0:
        m = min(kappa0, n)
        return m, SampleAction(m)
    if (t - 2 * kappa0) % 2 == 1 and current_m < n:
        m = current_m + 1
        return m, SampleAction(m, forced=m - 1)
    return current_m, SampleAction(current_m)


@dataclass(frozen=True)
class Schedule:
    kind: str
    n: int
    kappa0: int = 1
    m: int = 0  # for fixed
    table: tuple = ()  # for explicit: sorted ((t, m), ...)
    double_floor: bool = False

    def __post_init__(self):
        if self.kind not in (FIXED, LINEAR, ALTERNATING, EXPLICIT):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("schedule cap n must be positive")
        if self.kind == FIXED and not 1 <= self.m <= self.n:
            raise ValueError(f"fixed size {self.m} outside [1, {self.n}]")
        if self.kind in (LINEAR, ALTERNATING) and not 1 <= self.kappa0:
            raise ValueError("kappa0 must be >= 1")
        if self.kind == EXPLICIT:
            if not self.table:
                raise ValueError("explicit schedule needs at least one row")
            prev_t, prev_m = 0, 0
            for t, m in self.table:
                if t <= prev_t or m < prev_m or not 1 <= m <= self.n:
                    raise ValueError("explicit schedule must have increasing t, non-decreasing m in [1, n]")
                prev_t, prev_m = t, m
            if self.table[0][0] != 1:
                raise ValueError("explicit schedule must define t = 1")

    @classmethod
    def fixed(cls, m, n=None):
        return cls(FIXED, n=m if n is None else n, m=m)

    @classmethod
    def linear(cls, kappa0, n, double_floor=False):
        return cls(LINEAR, n=n, kappa0=clamp_kappa0(kappa0, n), double_floor=double_floor)

    @classmethod
    def alternating(cls, kappa0, n):
        return cls(ALTERNATING, n=n, kappa0=clamp_kappa0(kappa0, n))

    @classmethod
    def explicit(cls, rows, n):
        return cls(EXPLICIT, n=n, table=tuple(sorted((int(t), int(m)) for t, m in rows)))

    def size(self, t: int) -> int:
        if self.kind == FIXED:
            return fixed_size(t, self.m)
        if self.kind == LINEAR:
            return linear_size(t, self.kappa0, self.n, self.double_floor)
        if self.kind == ALTERNATING:
            return alternating_size(t, self.kappa0, self.n)
        ts = [row[0] for row in self.table]
        k = int(np.searchsorted(ts, t, side="right")) - 1
        return self.table[max(k, 0)][1]

    def initial_size(self) -> int:
        return self.size(1)

    def action(self, t: int, current_m: int):
        if self.kind == ALTERNATING:
            return alternating_action(t, current_m, self.kappa0, self.n)
        m = self.size(t)
        return m, SampleAction(m)

    def describe(self) -> str:
        if self.kind == FIXED:
            return f"fixed:{self.m}"
        if self.kind == EXPLICIT:
            return f"explicit[{len(self.table)} rows]"
        return f"{self.kind}(kappa0={self.kappa0},n={self.n})"


def clamp_kappa0(kappa, n) -> int:
    """ceil(kappa), floored at 1 and capped at n."""
    return int(min(n, max(1, math.ceil(kappa - 1e-9))))


def read_explicit_table(path) -> list:
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two columns 't m'")
            rows.append((int(parts[0]), int(parts[1])))
    return rows


def parse_schedule(text: str, n: int, kappa0: int, double_floor: bool = False) -> Schedule:
    """Parse ``fixed:<m>``, ``linear``, ``alternating`` or ``explicit:<file>``."""
    kind, _, arg = text.partition(":")
    if kind == FIXED:
        return Schedule.fixed(int(arg), n)
    if kind == LINEAR:
        return Schedule.linear(kappa0, n, double_floor)
    if kind == ALTERNATING:
        return Schedule.alternating(kappa0, n)
    if kind == EXPLICIT:
        return Schedule.explicit(read_explicit_table(arg), n)
    raise ValueError(f"unknown schedule {text!r}")
