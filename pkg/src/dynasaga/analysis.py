"""Convergence bounds, the U(t, n) recursion, and schedule optimality checks.

The statistical accuracy is the parametric bound H(m) = D * m**-alpha.
Rates use rho_m = 1 - min(1/m, 1/kappa) so tables stay valid below
m = kappa. Logarithms are natural.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from dynasaga.errors import InstanceTooLargeError
from dynasaga.model import Dataset, LossModel, empirical_risk, full_gradient


@dataclass(frozen=True)
class BoundConfig:
    D: float = 1.0
    alpha: float = 1.0
    C: float = 1.0
    xi: float = 1.0
    kappa: float = 1.0

    def __post_init__(self):
        for name in ("D", "C", "xi", "kappa"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.C < self.D:
            raise ValueError("C must be >= D")


def statistical_bound(m, cfg: BoundConfig):
    return cfg.D * np.power(m, -cfg.alpha, dtype=np.float64) if np.ndim(m) else cfg.D * float(m) ** -cfg.alpha


def rate(m, kappa: float):
    """rho_m = 1 - min(1/m, 1/kappa)."""
    if np.ndim(m):
        m = np.asarray(m, dtype=np.float64)
        return 1.0 - np.minimum(1.0 / m, 1.0 / kappa)
    return 1.0 - min(1.0 / m, 1.0 / kappa)


def switching_cost(m_from, m_to, cfg: BoundConfig):
    return (m_to - m_from) / m_to * statistical_bound(m_from, cfg)


def fixed_size_bound(m, n, cfg: BoundConfig):
    """V(m) = D/m + C exp(-n/m) for a fixed sample size m <= n."""
    m = np.asarray(m, dtype=np.float64) if np.ndim(m) else float(m)
    if np.any(np.asarray(m) <= 0) or np.any(np.asarray(m) > n):
        raise ValueError("m must lie in (0, n]")
    return cfg.D / m + cfg.C * np.exp(-n / m)


def optimal_fixed_size(n: int, cfg: BoundConfig) -> int:
    """round(max(kappa, n / (ln n + ln(C/D)))) clamped to [1, n]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    denom = math.log(n) + math.log(cfg.C / cfg.D)
    if denom <= 0:
        return n
    m = round(max(cfg.kappa, n / denom))
    return int(min(n, max(1, m)))


def initial_error_xi(L: float, mu: float, risk_gap: float) -> float:
    if risk_gap < 0:
        raise ValueError("risk gap must be nonnegative")
    return 4.0 * (L / mu) * risk_gap


def saga_initial_constant(model: LossModel, data: Dataset, w0, w_opt, L: float, mu: float) -> float:
    """Initial-error constant of the SAGA rate on ``data``.

    L * (|w0 - w*|^2 + n / (mu n + L) * (R(w0) - <grad R(w*), w0 - w*> - R(w*)))
    """
    n = len(data)
    w0 = np.asarray(w0, dtype=np.float64)
    diff = w0 - w_opt
    inner = (
        empirical_risk(model, w0, data)
        - float(full_gradient(model, w_opt, data) @ diff)
        - empirical_risk(model, w_opt, data)
    )
    return L * (float(diff @ diff) + n / (mu * n + L) * inner)


def two_pass_bound(n, cfg: BoundConfig):
    return statistical_bound(n, cfg) + 0.5 * cfg.xi * (cfg.kappa / n) ** 2


def one_pass_bound(n, cfg: BoundConfig):
    return 3.0 * 2.0 ** (cfg.alpha - 1.0) * statistical_bound(n, cfg) + 2.0 * cfg.xi * (cfg.kappa / n) ** 2


# ---------------------------------------------------------------------------
# U(t, m) recursion


def _switch_row(F, ms, H, cfg: BoundConfig, chunk=512):
    """min over k < j of F[k] + c(k, m_j), with its argmin column.

    Chaining two switches never beats a direct one when m H(m) is
    non-decreasing (alpha <= 1), so sources only need the first branch F.
    """
    ncols = len(F)
    sw = np.full(ncols, np.inf)
    src = np.zeros(ncols, dtype=np.int64)
    if ncols < 2:
        return sw, src
    G = F + H
    if cfg.alpha == 1.0:
        # c(k, m) = H(k) - D/m separates, so a running minimum suffices
        cm = np.minimum.accumulate(G)
        pos = np.where(G == cm, np.arange(ncols), 0)
        arg = np.maximum.accumulate(pos)
        sw[1:] = cm[:-1] - cfg.D / ms[1:]
        src[1:] = arg[:-1]
        return sw, src
    slope = ms * H  # c(k, m) = H(k) - m_k H(k) / m
    for lo in range(1, ncols, chunk):
        hi = min(ncols, lo + chunk)
        cand = G[None, :hi] - slope[None, :hi] / ms[lo:hi, None]
        mask = np.arange(hi)[None, :] >= np.arange(lo, hi)[:, None]
        cand[mask] = np.inf
        k = np.argmin(cand, axis=1)
        sw[lo:hi] = cand[np.arange(hi - lo), k]
        src[lo:hi] = k
    return sw, src


def iter_u_rows(T: int, n: int, cfg: BoundConfig, m_min: int = 1, switching: bool = True) -> Iterator:
    """Yield ``(t, U_row, switched, source)`` for t = 0..T over columns m_min..n."""
    if not 1 <= m_min <= n:
        raise ValueError("need 1 <= m_min <= n")
    ms = np.arange(m_min, n + 1, dtype=np.float64)
    rho = rate(ms, cfg.kappa)
    H = statistical_bound(ms, cfg)
    row = np.full(len(ms), cfg.xi)
    none = np.zeros(len(ms), dtype=bool)
    yield 0, row, none, np.zeros(len(ms), dtype=np.int64)
    for t in range(1, T + 1):
        F = rho * row
        if switching:
            sw, src = _switch_row(F, ms, H, cfg)
            switched = sw < F
            row = np.where(switched, sw, F)
        else:
            row, switched, src = F, none, np.zeros(len(ms), dtype=np.int64)
        yield t, row, switched, src


@dataclass
class URecursionTable:
    U: np.ndarray  # (T + 1, n - m_min + 1)
    switched: np.ndarray  # True where the switching branch won
    source: np.ndarray  # column index of the switch source
    m_min: int
    cfg: BoundConfig

    @property
    def T(self):
        return self.U.shape[0] - 1

    @property
    def n(self):
        return self.m_min + self.U.shape[1] - 1

    def value(self, t: int, m: int) -> float:
        return float(self.U[t, m - self.m_min])

    def path(self, t: Optional[int] = None, m: Optional[int] = None) -> list:
        """Optimal (t, m) states ending at (t, m), in forward order.

        Each optimizer step appears once; a switch shows up as a change of m
        at the same t.
        """
        t = self.T if t is None else t
        j = (self.n if m is None else m) - self.m_min
        states = [(t, j + self.m_min)]
        while t > 0:
            if self.switched[t, j]:
                j = int(self.source[t, j])
            else:
                t -= 1
            states.append((t, j + self.m_min))
        return states[::-1]

    def schedule(self, t: Optional[int] = None, m: Optional[int] = None) -> "ScheduleVector":
        """Iterations spent at each size along the optimal path."""
        m_end = self.n if m is None else m
        counts = np.zeros(m_end, dtype=np.int64)
        states = self.path(t, m)
        for (t0, m0), (t1, m1) in zip(states, states[1:]):
            if t1 == t0 + 1:
                counts[m1 - 1] += 1
        return ScheduleVector(counts)


def u_recursion_dp(T: int, n: int, cfg: BoundConfig, m_min: int = 1, switching: bool = True,
                   max_cells: int = 20_000_000) -> URecursionTable:
    ncols = n - m_min + 1
    cells = (T + 1) * ncols
    if cells > max_cells:
        raise InstanceTooLargeError(
            f"table of {cells} cells exceeds {max_cells}; use a coarser grid or u_diagonal()"
        )
    if cfg.alpha != 1.0 and ncols * ncols * T > 50 * max_cells:
        raise InstanceTooLargeError("general-alpha table too large; use a coarser grid")
    U = np.empty((T + 1, ncols))
    sw = np.zeros((T + 1, ncols), dtype=bool)
    src = np.zeros((T + 1, ncols), dtype=np.int32)
    for t, row, switched, source in iter_u_rows(T, n, cfg, m_min, switching):
        U[t], sw[t], src[t] = row, switched, source
    return URecursionTable(U, sw, src, m_min, cfg)


def u_diagonal(n_max: int, cfg: BoundConfig, m_min: int = 1, ratio: int = 2):
    """U(ratio * n, n) for n = m_min..n_max without storing the table."""
    ns = np.arange(m_min, n_max + 1)
    out = np.empty(len(ns))
    for t, row, _, _ in iter_u_rows(ratio * n_max, n_max, cfg, m_min):
        if t % ratio == 0 and m_min <= t // ratio <= n_max:
            j = t // ratio - m_min
            out[j] = row[j]
    return ns, out


def linear_path_values(n_max: int, cfg: BoundConfig, kappa0: Optional[int] = None):
    """The recursion evaluated along the Linear schedule: U_lin(2n, n) for n = kappa0..n_max.

    Warm start: 2 * kappa0 steps at size kappa0, then one new sample and two
    steps per size.
    """
    k0 = kappa0 if kappa0 is not None else max(1, math.ceil(cfg.kappa - 1e-9))
    ns = np.arange(k0, n_max + 1)
    out = np.empty(len(ns))
    u = cfg.xi * rate(k0, cfg.kappa) ** (2 * k0)
    out[0] = u
    for j, m in enumerate(ns[1:], start=1):
        u = rate(int(m), cfg.kappa) ** 2 * (u + statistical_bound(int(m) - 1, cfg) / m)
        out[j] = u
    return ns, out


# ---------------------------------------------------------------------------
# schedule vectors


@dataclass
class ScheduleVector:
    """Iterations spent at each sample size; ``t[m - 1]`` belongs to size m."""

    t: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.int64)
        if np.any(self.t < 0):
            raise ValueError("iteration counts must be nonnegative")

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def total(self) -> int:
        return int(self.t.sum())

    def active_sizes(self) -> list:
        return [m for m in range(1, self.n + 1) if self.t[m - 1] > 0]

    def has_skips(self) -> bool:
        """True if some size between the first and last active sizes gets no iterations."""
        act = self.active_sizes()
        return bool(act) and len(act) != act[-1] - act[0] + 1

    def interior_counts(self) -> list:
        act = self.active_sizes()
        return [int(self.t[m - 1]) for m in range(act[0] + 1, act[-1])] if len(act) > 2 else []

    def interior_mode(self):
        counts = self.interior_counts()
        return Counter(counts).most_common(1)[0][0] if counts else None


def schedule_value(ts: ScheduleVector, cfg: BoundConfig) -> float:
    """The bound A(ts) ending at size ts.n, unrolled over active sizes."""
    act = ts.active_sizes()
    if not act:
        return cfg.xi
    prev = act[0]
    a = cfg.xi * rate(prev, cfg.kappa) ** int(ts.t[prev - 1])
    for m in act[1:]:
        a = rate(m, cfg.kappa) ** int(ts.t[m - 1]) * (a + switching_cost(prev, m, cfg))
        prev = m
    if prev < ts.n:
        a += switching_cost(prev, ts.n, cfg)
    return float(a)


def linear_schedule_vector(n: int, T: int, kappa0: int) -> ScheduleVector:
    from dynasaga.schedules import linear_size

    counts = np.zeros(n, dtype=np.int64)
    for t in range(1, T + 1):
        counts[linear_size(t, kappa0, n) - 1] += 1
    return ScheduleVector(counts)


def optimal_schedule_bruteforce(n: int, T: int, cfg: BoundConfig, m_min: int = 1,
                                max_n: int = 128) -> ScheduleVector:
    """Exact minimizer of A(ts) over integer schedules with sum t_m = T ending at size n.

    Dynamic program over (last active size, budget); independent of the
    per-step U recursion.
    """
    if n > max_n:
        raise InstanceTooLargeError(f"n={n} exceeds {max_n} for exhaustive search")
    if not 1 <= m_min <= n or T < 0:
        raise ValueError("bad instance")
    ms = range(m_min, n + 1)
    inf = np.inf
    # S[m, b]: value on entering size m with b iterations spent; E[m, b]: after >= 1 step at m
    S = np.full((n + 1, T + 1), inf)
    E = np.full((n + 1, T + 1), inf)
    s_src = np.full((n + 1, T + 1), -1, dtype=np.int64)  # -1: start here
    e_steps = np.zeros((n + 1, T + 1), dtype=np.int64)
    for m in ms:
        S[m, 0] = cfg.xi
        if m > m_min:
            ks = np.arange(m_min, m)
            cost = switching_cost(ks.astype(np.float64), float(m), cfg)
            cand = E[m_min:m, :] + cost[:, None]
            k = np.argmin(cand, axis=0)
            best = cand[k, np.arange(T + 1)]
            better = best < S[m]
            S[m] = np.where(better, best, S[m])
            s_src[m] = np.where(better, k + m_min, s_src[m])
        r = rate(m, cfg.kappa)
        fin = np.isfinite(S[m])
        s_fin = np.where(fin, S[m], 0.0)  # avoids 0 * inf when r = 0
        for steps in range(1, T + 1):
            cand = np.where(fin[: T + 1 - steps], r ** steps * s_fin[: T + 1 - steps], inf)
            tgt = E[m, steps:]
            better = cand < tgt
            E[m, steps:] = np.where(better, cand, tgt)
            e_steps[m, steps:] = np.where(better, steps, e_steps[m, steps:])
    counts = np.zeros(n, dtype=np.int64)
    m, b = n, T
    in_e = E[n, T] <= S[n, T]
    while True:
        if in_e:
            steps = int(e_steps[m, b])
            counts[m - 1] += steps
            b -= steps
        k = int(s_src[m, b])
        if k < 0:
            break
        m, in_e = k, True
    if b != 0:
        raise RuntimeError("schedule reconstruction failed")
    return ScheduleVector(counts)


def slope_estimate(points: Sequence) -> float:
    """Least-squares slope of -log2(suboptimality) against log2(n)."""
    if len(points) < 3:
        raise ValueError("need at least three points")
    ns = np.array([p[0] for p in points], dtype=np.float64)
    vals = np.array([p[1] for p in points], dtype=np.float64)
    if np.any(ns <= 0) or np.any(vals <= 0):
        raise ValueError("sizes and suboptimalities must be positive")
    return float(np.polyfit(np.log2(ns), -np.log2(vals), 1)[0])
