"""SAGA with a growable gradient memory, dynaSAGA, and SGD/SVRG baselines.

Stored gradients use the linear-model structure: for sample i only the
scalar ``coef[i]`` of ``coef[i] * a_i`` is kept, and the regularizer
gradient ``lam * w`` is rebuilt at the current iterate. ``grad_sum`` is the
sum of the data parts over the active prefix. The regularizer is thus
handled exactly instead of through stale copies, and the table costs one
float per sample even for dense high-dimensional problems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from dynasaga.data import make_rng
from dynasaga.errors import CannotGrowError, DimensionMismatchError, OutOfActiveSetError, ReferenceOptimumError
from dynasaga.model import Dataset, LossModel, ProblemConstants, empirical_risk
from dynasaga.schedules import Schedule


@dataclass(frozen=True)
class EtaRule:
    kind: str = "saga-table"  # fixed | saga-table | quarter-L | decreasing
    value: float = 0.0  # eta for "fixed", C0 for "decreasing"

    def __call__(self, t: int, m: int, consts: ProblemConstants) -> float:
        if self.kind == "fixed":
            return self.value
        if self.kind == "saga-table":
            return 0.3 / (consts.L + consts.mu * m)
        if self.kind == "quarter-L":
            return 1.0 / (4.0 * consts.L)
        if self.kind == "decreasing":
            c0 = self.value or 0.1
            return c0 / (c0 + consts.mu * t)
        raise ValueError(f"unknown step-size rule {self.kind!r}")


@dataclass
class RunConfig:
    T: int
    eta: EtaRule = field(default_factory=EtaRule)
    seed: int = 0
    record_times: Optional[tuple] = None  # explicit snapshot iterations; overrides record_every
    record_every: int = 0  # 0 -> only t = 0 and t = T
    w0: Optional[np.ndarray] = None
    lazy_growth: bool = False

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")

    def times(self):
        if self.record_times is not None:
            return sorted({int(t) for t in self.record_times if 0 <= t <= self.T})
        if self.record_every > 0:
            return sorted(set(range(0, self.T + 1, self.record_every)) | {self.T})
        return [0, self.T]


@dataclass
class Trajectory:
    t: list = field(default_factory=list)
    m: list = field(default_factory=list)
    w: list = field(default_factory=list)

    def __len__(self):
        return len(self.t)

    def final(self):
        return self.w[-1]


class _Recorder:
    def __init__(self, times):
        self.times = list(times)
        self.k = 0
        self.traj = Trajectory()

    @property
    def next(self):
        return self.times[self.k] if self.k < len(self.times) else None

    def advance(self, t, m, w):
        while self.k < len(self.times) and self.times[self.k] <= t:
            self.traj.t.append(self.times[self.k])
            self.traj.m.append(m)
            self.traj.w.append(w.copy())
            self.k += 1


class UniformStream:
    """Uniform indices drawn from buffered doubles of a PCG64 stream."""

    def __init__(self, rng: np.random.Generator, block: int = 4096):
        self.rng = rng
        self.block = block
        self.buf = rng.random(block)
        self.pos = 0

    def index(self, m: int) -> int:
        if self.pos == self.block:
            self.buf = self.rng.random(self.block)
            self.pos = 0
        u = self.buf[self.pos]
        self.pos += 1
        return min(int(u * m), m - 1)


@dataclass
class SagaState:
    w: np.ndarray
    coef: np.ndarray  # stored data-term derivative per sample, all n
    grad_sum: np.ndarray  # sum over active prefix of coef[i] * a_i
    m: int
    lam: float
    step_count: int = 0
    resum_every: int = 0

    def alpha(self, i: int, data: Dataset) -> np.ndarray:
        """Materialized stored gradient of sample i at the current iterate."""
        idx, val = data.row(i)
        g = self.lam * self.w if self.lam else np.zeros_like(self.w)
        g[idx] += self.coef[i] * val
        return g

    def resum(self, data: Dataset) -> None:
        self.grad_sum = np.asarray(data.rmatvec(self.coef, self.m), dtype=np.float64).ravel().copy()

    def average(self) -> np.ndarray:
        """The SAGA correction A: mean of the active stored gradients."""
        return self.grad_sum / self.m + self.lam * self.w


def saga_init(model: LossModel, data: Dataset, w0, n: int | None = None, m: int | None = None) -> SagaState:
    n_data = len(data)
    if n is not None and n != n_data:
        raise ValueError(f"n={n} differs from dataset size {n_data}")
    w = np.array(w0, dtype=np.float64)
    if w.shape != (data.dimension,):
        raise DimensionMismatchError(f"w0 has shape {w.shape}, expected ({data.dimension},)")
    m = n_data if m is None else m
    if not 1 <= m <= n_data:
        raise ValueError(f"initial active size {m} outside [1, {n_data}]")
    coef = model.derivatives(data.matvec(w), data.y).astype(np.float64)
    state = SagaState(w=w, coef=coef, grad_sum=np.zeros(data.dimension), m=m, lam=model.lam, resum_every=n_data)
    state.resum(data)
    return state


def saga_step(state: SagaState, model: LossModel, data: Dataset, i: int, eta: float) -> SagaState:
    m = state.m
    if not 0 <= i < m:
        raise OutOfActiveSetError(f"index {i} outside active prefix of size {m}")
    idx, val = data.row(i)
    w = state.w
    c = model.derivative(float(val @ w[idx]), data.y[i])
    dc = c - state.coef[i]
    # w <- w - eta * (dc * a_i + grad_sum / m + lam * w)
    if state.lam:
        w *= 1.0 - eta * state.lam
    w -= (eta / m) * state.grad_sum
    w[idx] -= (eta * dc) * val
    state.grad_sum[idx] += dc * val
    state.coef[i] = c
    state.step_count += 1
    if state.resum_every and state.step_count % state.resum_every == 0:
        state.resum(data)
    return state


def grow_active(state: SagaState, model: LossModel, data: Dataset, lazy: bool = False) -> SagaState:
    if state.m >= len(data):
        raise CannotGrowError(f"active set already holds all {len(data)} samples")
    i = state.m
    idx, val = data.row(i)
    if lazy:
        state.coef[i] = model.derivative(float(val @ state.w[idx]), data.y[i])
    state.grad_sum[idx] += state.coef[i] * val
    state.m += 1
    return state


def dynasaga_run(model: LossModel, data: Dataset, schedule: Schedule, cfg: RunConfig,
                 consts: ProblemConstants) -> Trajectory:
    if schedule.n > len(data):
        raise ValueError(f"schedule cap {schedule.n} exceeds dataset size {len(data)}")
    w0 = np.zeros(data.dimension) if cfg.w0 is None else cfg.w0
    state = saga_init(model, data, w0, m=schedule.initial_size())
    stream = UniformStream(make_rng(cfg.seed))
    rec = _Recorder(cfg.times())
    rec.advance(0, state.m, state.w)
    for t in range(1, cfg.T + 1):
        new_m, action = schedule.action(t, state.m)
        while state.m < new_m:
            grow_active(state, model, data, cfg.lazy_growth)
        i = stream.index(state.m) if action.forced is None else action.forced
        saga_step(state, model, data, i, cfg.eta(t, state.m, consts))
        if rec.next == t:
            rec.advance(t, state.m, state.w)
    return rec.traj


def saga_run(model: LossModel, data: Dataset, cfg: RunConfig, consts: ProblemConstants,
             m: int | None = None) -> Trajectory:
    """Plain SAGA on the first m samples (all of them by default)."""
    m = len(data) if m is None else m
    w0 = np.zeros(data.dimension) if cfg.w0 is None else cfg.w0
    state = saga_init(model, data, w0, m=m)
    stream = UniformStream(make_rng(cfg.seed))
    rec = _Recorder(cfg.times())
    rec.advance(0, m, state.w)
    for t in range(1, cfg.T + 1):
        saga_step(state, model, data, stream.index(m), cfg.eta(t, m, consts))
        if rec.next == t:
            rec.advance(t, m, state.w)
    return rec.traj


def sgd_run(model: LossModel, data: Dataset, cfg: RunConfig, consts: ProblemConstants) -> Trajectory:
    n = len(data)
    w = np.zeros(data.dimension) if cfg.w0 is None else np.array(cfg.w0, dtype=np.float64)
    lam = model.lam
    stream = UniformStream(make_rng(cfg.seed))
    rec = _Recorder(cfg.times())
    rec.advance(0, n, w)
    for t in range(1, cfg.T + 1):
        i = stream.index(n)
        idx, val = data.row(i)
        c = model.derivative(float(val @ w[idx]), data.y[i])
        eta = cfg.eta(t, n, consts)
        if lam:
            w *= 1.0 - eta * lam
        w[idx] -= (eta * c) * val
        if rec.next == t:
            rec.advance(t, n, w)
    return rec.traj


@dataclass(frozen=True)
class SvrgParams:
    b: float = 3.0  # stage growth factor
    p: float = 2.0
    k0: Optional[int] = None  # initial batch; defaults to ceil(kappa)
    inner: Optional[int] = None  # steps per stage; defaults to ceil(kappa / eta)
    sgd_first_stage: bool = False

    @property
    def eta(self) -> float:
        return 1.0 / (10.0 * self.b ** self.p)


def ssvrg_run(model: LossModel, data: Dataset, cfg: RunConfig, consts: ProblemConstants,
              params: SvrgParams = SvrgParams()) -> Trajectory:
    """Streaming SVRG over the data in prefix order.

    Stage s reads the next k0 * b**s unseen samples, takes the full gradient
    over them at the anchor, then runs SVRG steps sampling within that batch.
    ``t`` counts gradient evaluations: k for an anchor pass, 1 per inner
    step (anchor derivatives are cached per sample). With
    ``sgd_first_stage`` the first stage runs plain SGD instead.
    """
    n = len(data)
    lam = model.lam
    eta = params.eta
    k0 = params.k0 or max(1, math.ceil(consts.kappa))
    inner = params.inner or math.ceil(consts.kappa / eta)
    w = np.zeros(data.dimension) if cfg.w0 is None else np.array(cfg.w0, dtype=np.float64)
    stream = UniformStream(make_rng(cfg.seed))
    rec = _Recorder(cfg.times())
    rec.advance(0, 0, w)
    t, pos, stage = 0, 0, 0
    while t < cfg.T and pos < n:
        k = min(int(round(k0 * params.b ** stage)), n - pos)
        lo, hi = pos, pos + k
        if params.sgd_first_stage and stage == 0:
            for _ in range(inner):
                if t >= cfg.T:
                    break
                i = lo + stream.index(k)
                idx, val = data.row(i)
                c = model.derivative(float(val @ w[idx]), data.y[i])
                if lam:
                    w *= 1.0 - eta * lam
                w[idx] -= (eta * c) * val
                t += 1
                if rec.next == t:
                    rec.advance(t, hi, w)
        else:
            c_anchor = np.zeros(n)
            c_anchor[lo:hi] = model.derivatives(data.X[lo:hi] @ w, data.y[lo:hi])
            mu_data = np.asarray(data.X[lo:hi].T @ c_anchor[lo:hi]).ravel() / k
            t = min(t + k, cfg.T)
            rec.advance(t, hi, w)
            for _ in range(inner):
                if t >= cfg.T:
                    break
                i = lo + stream.index(k)
                idx, val = data.row(i)
                c = model.derivative(float(val @ w[idx]), data.y[i])
                if lam:
                    w *= 1.0 - eta * lam
                w -= eta * mu_data
                w[idx] -= (eta * (c - c_anchor[i])) * val
                t += 1
                if rec.next == t:
                    rec.advance(t, hi, w)
        pos = hi
        stage += 1
    rec.advance(cfg.T, pos, w)
    return rec.traj


@dataclass(frozen=True)
class RiskRow:
    t: int
    m: int
    empirical_subopt: float
    expected_subopt: float


def trajectory_risks(traj: Trajectory, model: LossModel, train: Dataset, test: Dataset | None,
                     w_ref) -> list:
    r_train = empirical_risk(model, w_ref, train)
    r_test = empirical_risk(model, w_ref, test) if test is not None else None
    rows = []
    for t, m, w in zip(traj.t, traj.m, traj.w):
        emp = empirical_risk(model, w, train) - r_train
        if emp < -1e-9:
            raise ReferenceOptimumError(
                f"empirical suboptimality {emp:.3e} at t={t}: reference optimum not converged"
            )
        exp = empirical_risk(model, w, test) - r_test if test is not None else float("nan")
        rows.append(RiskRow(t, m, emp, exp))
    return rows
