"""Experiment configuration, reference optimum, multi-seed runner and CSV reports."""

from __future__ import annotations

import concurrent.futures as cf
import dataclasses
import hashlib
import io
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from dynasaga import analysis
from dynasaga.data import SplitSpec, SyntheticConfig, generate_classification, generate_regression, parse_libsvm, split
from dynasaga.errors import ReferenceOptimumError
from dynasaga.model import (
    LEAST_SQUARES,
    LOGISTIC,
    Dataset,
    LossModel,
    ProblemConstants,
    constants,
    empirical_risk,
    full_gradient,
    hessian_vector,
)
from dynasaga.optim import (
    EtaRule,
    RunConfig,
    SvrgParams,
    UniformStream,
    dynasaga_run,
    saga_init,
    saga_run,
    saga_step,
    sgd_run,
    ssvrg_run,
    trajectory_risks,
)
from dynasaga.schedules import Schedule, clamp_kappa0, parse_schedule

CSV_HEADER = (
    "method,seed_count,t,m,emp_subopt_log2_mean,emp_subopt_log2_std,exp_subopt_log2_mean,exp_subopt_log2_std"
)
LOSS_ALIASES = {"logistic": LOGISTIC, "ls": LEAST_SQUARES, LOGISTIC: LOGISTIC, LEAST_SQUARES: LEAST_SQUARES}
# smallest positive value fed to log2; exact zeros map here instead of -inf
LOG_FLOOR = 1e-300


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    data: str = "synthetic"  # LIBSVM path, or "synthetic"
    task: str = "classification"  # for synthetic data and for parsing labels
    n: int = 4096
    d: int = 20
    sigma: float = 1.0
    min_eig: float = 1.0
    data_seed: int = 0
    normalize: bool = True  # unit-norm rows for synthetic classification
    loss: str = "logistic"
    lambda_exp: float = 0.5  # lambda = n_train ** -lambda_exp
    lam: float = -1.0  # constant lambda when >= 0; overrides lambda_exp
    methods: str = "saga,dynasaga-linear,dynasaga-alternating"
    schedule: str = "linear"
    T: int = 0  # 0 -> one pass over the training set
    seeds: int = 10
    seed: int = 0
    snapshots: int = 50
    train_fraction: float = 0.9
    split_seed: int = 0
    half_data: bool = False
    optimum: str = "newton"  # newton | saga
    jobs: int = 1
    out: str = ""

    def __post_init__(self):
        if not self.method_list():
            raise ConfigError("at least one method is required")
        if self.loss not in LOSS_ALIASES:
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.seeds < 1:
            raise ConfigError("seeds must be >= 1")
        if self.T < 0 or self.snapshots < 1 or self.jobs < 1:
            raise ConfigError("T, snapshots and jobs must be nonnegative / positive")
        if self.optimum not in ("newton", "saga"):
            raise ConfigError(f"unknown optimum solver {self.optimum!r}")
        if self.task not in ("classification", "regression"):
            raise ConfigError(f"unknown task {self.task!r}")
        for name in self.method_list():
            parse_method(name)

    def method_list(self) -> list:
        return [s.strip() for s in self.methods.split(",") if s.strip()]

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        kinds = {f.name: f.type for f in dataclasses.fields(cls)}
        kw = {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in kinds:
                raise ConfigError(f"unknown config key {key!r}")
            kw[key] = _coerce(key, kinds[key], raw)
        return cls(**kw)


def _coerce(key, kind, raw):
    if not isinstance(raw, str):
        return raw
    try:
        if kind == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}") from None
    return raw


def read_config_file(path) -> dict:
    """Flat ``key = value`` text with ``#`` comments."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            out[key.strip()] = value.strip()
    return out


def derive_seed(master: int, method: str, index: int) -> int:
    """First 8 bytes of sha256("master:method:index") as an unsigned integer."""
    digest = hashlib.sha256(f"{master}:{method}:{index}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def snapshot_times(T: int, count: int = 50, extra=()) -> list:
    """``count`` log-spaced iterations in [1, T] plus t = 0, T and ``extra``."""
    ts = np.unique(np.round(np.logspace(0.0, math.log10(max(T, 1)), count)).astype(np.int64))
    keep = {0, T} | {int(t) for t in ts} | {int(t) for t in extra if 0 <= t <= T}
    return sorted(keep)


# ---------------------------------------------------------------------------
# reference optimum


@dataclass
class OptimumResult:
    w: np.ndarray
    residual: float
    converged: bool
    iterations: int

    @property
    def status(self) -> str:
        if self.converged:
            return "ok"
        return "warning" if self.residual <= 1e-6 else "failed"


def reference_optimum(model: LossModel, train: Dataset, method: str = "newton", tol: float = 1e-10,
                      cap: Optional[int] = None, consts: Optional[ProblemConstants] = None) -> OptimumResult:
    """High-precision minimizer of the empirical risk on ``train``.

    ``newton`` runs damped Newton steps (direct solves up to d = 2000,
    conjugate gradients beyond) until the gradient norm drops below ``tol``
    or stops improving. ``saga`` runs fixed-size SAGA with the table step
    size for at most ``cap`` (default 200 n) steps.
    """
    if method == "saga":
        return _saga_optimum(model, train, tol, cap, consts)
    if method != "newton":
        raise ValueError(f"unknown optimum method {method!r}")
    d, n = train.dimension, len(train)
    w = np.zeros(d)
    g = full_gradient(model, w, train)
    best = float(np.linalg.norm(g))
    stall = 0
    it = 0
    max_iter = cap or 100
    while best > tol and it < max_iter and stall < 3:
        it += 1
        z = train.matvec(w)
        h = model.second_derivatives(z, train.y)
        if d <= 2000:
            A = train.X
            H = np.asarray((A.T @ A.multiply(h[:, None])).todense()) / n + model.lam * np.eye(d)
            step = np.linalg.solve(H, g)
        else:
            op = spla.LinearOperator((d, d), matvec=lambda v: hessian_vector(model, w, v, train))
            step, _ = spla.cg(op, g, rtol=1e-12, maxiter=10 * d)
        r0 = empirical_risk(model, w, train)
        s = 1.0
        while s > 1e-8:
            cand = w - s * step
            if empirical_risk(model, cand, train) <= r0 + 1e-12 * abs(r0):
                break
            s *= 0.5
        w = w - s * step
        g = full_gradient(model, w, train)
        norm = float(np.linalg.norm(g))
        if norm < 0.5 * best:
            stall = 0
        else:
            stall += 1
        best = min(best, norm)
    residual = float(np.linalg.norm(full_gradient(model, w, train)))
    return OptimumResult(w, residual, residual <= tol, it)


def _saga_optimum(model, train, tol, cap, consts):
    n = len(train)
    consts = consts or constants(model, train)
    cap = 200 * n if cap is None else cap
    eta = 0.3 / (consts.L + consts.mu * n)
    state = saga_init(model, train, np.zeros(train.dimension))
    stream = UniformStream(np.random.Generator(np.random.PCG64(0)))
    residual = float(np.linalg.norm(full_gradient(model, state.w, train)))
    t = 0
    while residual > tol and t < cap:
        for _ in range(min(n, cap - t)):
            saga_step(state, model, train, stream.index(n), eta)
            t += 1
        residual = float(np.linalg.norm(full_gradient(model, state.w, train)))
    return OptimumResult(state.w.copy(), residual, residual <= tol, t)


# ---------------------------------------------------------------------------
# methods


@dataclass(frozen=True)
class MethodSpec:
    name: str
    kind: str  # saga | dynasaga | sgd | ssvrg
    eta: Optional[float] = None
    size: Optional[int] = None  # fixed SAGA size; None -> all samples
    optimal_size: bool = False
    schedule: Optional[str] = None
    sgd_first_stage: bool = False


def parse_method(name: str) -> MethodSpec:
    """Method names: saga, saga:<m>, saga-opt, dynasaga, dynasaga-linear,
    dynasaga-alternating, sgd, sgd:<eta>, ssvrg, sgd-svrg."""
    base, _, arg = name.partition(":")
    try:
        if base == "saga":
            return MethodSpec(name, "saga", size=int(arg) if arg else None)
        if base == "saga-opt" and not arg:
            return MethodSpec(name, "saga", optimal_size=True)
        if base == "dynasaga":
            return MethodSpec(name, "dynasaga", schedule=arg or None)
        if base == "dynasaga-linear" and not arg:
            return MethodSpec(name, "dynasaga", schedule="linear")
        if base == "dynasaga-alternating" and not arg:
            return MethodSpec(name, "dynasaga", schedule="alternating")
        if base == "sgd":
            return MethodSpec(name, "sgd", eta=float(arg) if arg else None)
        if base == "ssvrg" and not arg:
            return MethodSpec(name, "ssvrg")
        if base == "sgd-svrg" and not arg:
            return MethodSpec(name, "ssvrg", sgd_first_stage=True)
    except ValueError:
        pass
    raise ConfigError(f"unknown method {name!r}")


@dataclass
class Problem:
    model: LossModel
    train: Dataset
    test: Optional[Dataset]
    consts: ProblemConstants
    w_ref: np.ndarray
    T: int
    cap: int  # sample-size cap for growing schedules
    schedule: str
    times: tuple


def run_method(problem: Problem, spec: MethodSpec, seed: int):
    """One optimizer run; returns its RiskRow list."""
    model, train, consts = problem.model, problem.train, problem.consts
    n = len(train)
    kappa0 = clamp_kappa0(consts.kappa, problem.cap)
    cfg = RunConfig(T=problem.T, seed=seed, record_times=problem.times)
    if spec.kind == "saga":
        if spec.optimal_size:
            m = analysis.optimal_fixed_size(n, analysis.BoundConfig(kappa=consts.kappa))
        else:
            m = n if spec.size is None else spec.size
        if not 1 <= m <= n:
            raise ConfigError(f"SAGA size {m} outside [1, {n}]")
        traj = saga_run(model, train, cfg, consts, m=m)
    elif spec.kind == "dynasaga":
        sched = parse_schedule(spec.schedule or problem.schedule, problem.cap, kappa0)
        traj = dynasaga_run(model, train, sched, cfg, consts)
    elif spec.kind == "sgd":
        rule = EtaRule("decreasing", 0.1) if spec.eta is None else EtaRule("fixed", spec.eta)
        traj = sgd_run(model, train, dataclasses.replace(cfg, eta=rule), consts)
    else:
        traj = ssvrg_run(model, train, cfg, consts, SvrgParams(sgd_first_stage=spec.sgd_first_stage))
    return trajectory_risks(traj, model, train, problem.test, problem.w_ref)


def _run_job(args):
    problem, spec, seed = args
    try:
        return run_method(problem, spec, seed), None
    except (ArithmeticError, ValueError, IndexError) as exc:  # recorded, the experiment continues
        return None, f"{type(exc).__name__}: {exc}"


# ---------------------------------------------------------------------------
# reports


@dataclass
class ReportRow:
    method: str
    seed_count: int
    t: int
    m: int
    emp_log2_mean: float
    emp_log2_std: float
    exp_log2_mean: float
    exp_log2_std: float
    emp_mean: float = float("nan")
    exp_mean: float = float("nan")

    def csv_fields(self):
        return (self.method, self.seed_count, self.t, self.m, self.emp_log2_mean, self.emp_log2_std,
                self.exp_log2_mean, self.exp_log2_std)


@dataclass
class Report:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def method_rows(self, method: str) -> list:
        return [r for r in self.rows if r.method == method]

    def at(self, method: str, t: int) -> ReportRow:
        for r in self.rows:
            if r.method == method and r.t == t:
                return r
        raise KeyError((method, t))


def _log2(x):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.log2(np.where(x > 0, np.maximum(x, LOG_FLOOR), np.where(x == 0, LOG_FLOOR, np.nan)))


def aggregate(method: str, runs: list) -> list:
    """Mean over seeds of the suboptimality (reported as log2) and the
    across-seed standard deviation of the per-seed log2 values."""
    rows = []
    if not runs:
        return rows
    for k in range(len(runs[0])):
        emp = np.array([max(r[k].empirical_subopt, 0.0) for r in runs])
        exp = np.array([r[k].expected_subopt for r in runs])
        ddof = 1 if len(runs) > 1 else 0
        emp_mean, exp_mean = float(emp.mean()), float(exp.mean())
        rows.append(ReportRow(
            method, len(runs), runs[0][k].t, runs[0][k].m,
            float(_log2(np.array(emp_mean))), float(np.std(_log2(emp), ddof=ddof)),
            float(_log2(np.array(exp_mean))), float(np.std(_log2(exp), ddof=ddof)),
            emp_mean, exp_mean,
        ))
    return rows


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def emit_csv(report: Report, path) -> None:
    """Write metadata as ``#`` lines, the 8-column header, then data rows."""
    buf = io.StringIO(newline="")
    for key, value in report.metadata.items():
        buf.write(f"# {key} = {_fmt(value)}\n")
    for msg in report.failures:
        buf.write(f"# failure = {msg}\n")
    buf.write(CSV_HEADER + "\n")
    for row in report.rows:
        buf.write(",".join(_fmt(v) for v in row.csv_fields()) + "\n")
    text = buf.getvalue()
    if str(path) == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc


def read_csv(path) -> Report:
    report = Report()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header_seen = False
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                key, value = key.strip(), value.strip()
                if key == "failure":
                    report.failures.append(value)
                else:
                    report.metadata[key] = value
                continue
            if not header_seen:
                if line != CSV_HEADER:
                    raise ValueError(f"{path}: unexpected header {line!r}")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 8:
                raise ValueError(f"{path}: expected 8 columns, got {len(parts)}")
            report.rows.append(ReportRow(parts[0], int(parts[1]), int(parts[2]), int(parts[3]),
                                         *(float(p) for p in parts[4:])))
    return report


# ---------------------------------------------------------------------------
# experiments


def load_data(cfg: ExperimentConfig) -> tuple:
    if cfg.data == "synthetic":
        syn = SyntheticConfig(n=cfg.n, d=cfg.d, sigma_noise=cfg.sigma, min_eig=cfg.min_eig, seed=cfg.data_seed)
        if cfg.task == "classification":
            data, _ = generate_classification(syn, normalize_rows=cfg.normalize)
        else:
            data, _ = generate_regression(syn)
        return data, f"synthetic-{cfg.task}(n={cfg.n},d={cfg.d},seed={cfg.data_seed})"
    return parse_libsvm(Path(cfg.data), mode=cfg.task), cfg.data


def build_problem(cfg: ExperimentConfig, data: Dataset) -> tuple:
    train, test = split(data, SplitSpec(cfg.train_fraction, cfg.split_seed))
    n = len(train)
    lam = cfg.lam if cfg.lam >= 0 else n ** -cfg.lambda_exp
    model = LossModel(LOSS_ALIASES[cfg.loss], lam)
    consts = constants(model, train)
    opt = reference_optimum(model, train, cfg.optimum, consts=consts)
    if opt.status == "failed":
        raise ReferenceOptimumError(f"reference optimum did not converge (gradient norm {opt.residual:.3e})")
    T = cfg.T or n
    cap = min(n, max(1, T // 2)) if cfg.half_data else n
    times = tuple(snapshot_times(T, cfg.snapshots, extra=(n,)))
    return Problem(model, train, test, consts, opt.w, T, cap, cfg.schedule, times), opt


def run_experiment(cfg: ExperimentConfig, data: Optional[Dataset] = None, name: str = "") -> Report:
    if data is None:
        data, name = load_data(cfg)
    problem, opt = build_problem(cfg, data)
    if opt.status != "ok":
        warnings.warn(f"reference optimum residual {opt.residual:.3e} above tolerance")
    report = Report()
    c = problem.consts
    report.metadata.update({
        "dataset": name or "in-memory",
        "n_train": len(problem.train),
        "n_test": len(problem.test),
        "dimension": problem.train.dimension,
        "loss": problem.model.kind,
        "lambda": problem.model.lam,
        "L": c.L,
        "mu": c.mu,
        "kappa": c.kappa,
        "T": problem.T,
        "schedule_cap": problem.cap,
        "one_pass_t": len(problem.train),
        "master_seed": cfg.seed,
        "reference_residual": opt.residual,
        "reference_status": opt.status,
    })
    jobs = [(problem, parse_method(name), derive_seed(cfg.seed, name, k))
            for name in cfg.method_list() for k in range(cfg.seeds)]
    if cfg.jobs > 1:
        with cf.ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    by_method = {}
    for (_, spec, seed), (rows, err) in zip(jobs, results):
        if err is not None:
            report.failures.append(f"{spec.name} seed={seed}: {err}")
        else:
            by_method.setdefault(spec.name, []).append(rows)
    for name in cfg.method_list():
        report.rows.extend(aggregate(name, by_method.get(name, [])))
    return report


@dataclass
class SlopeConfig:
    sizes: tuple = tuple(2 ** k for k in range(9, 14))
    kappa_rule: str = "sqrt"  # sqrt -> n**0.5, or a float exponent such as "0.75"
    d: int = 5
    sigma: float = 2.0
    seeds: int = 10
    seed: int = 0

    def __post_init__(self):
        if len(self.sizes) < 3:
            raise ConfigError("slope experiment needs at least three sizes")
        self.exponent()

    def exponent(self) -> float:
        if self.kappa_rule == "sqrt":
            return 0.5
        try:
            return float(self.kappa_rule)
        except ValueError:
            raise ConfigError(f"unknown kappa rule {self.kappa_rule!r}") from None


@dataclass
class SlopeReport:
    points: list  # (n, mean empirical suboptimality at t = n)
    slope: float
    config: SlopeConfig


def slope_point(n: int, cfg: SlopeConfig) -> float:
    """Mean empirical suboptimality of dynaSAGA Linear after T = n steps.

    Inputs have diagonal covariance from 1 down to 1/kappa(n). The step size
    uses the per-sample smoothness 2 max |a_i|^2, and kappa0 follows the
    population condition number kappa(n).
    """
    model = LossModel(LEAST_SQUARES)
    kappa = n ** cfg.exponent()
    subs = []
    for k in range(cfg.seeds):
        data, _ = generate_regression(SyntheticConfig(
            n=n, d=cfg.d, sigma_noise=cfg.sigma, min_eig=1.0 / kappa, seed=derive_seed(cfg.seed, f"data-{n}", k)))
        consts = ProblemConstants(2.0 * float(data.sq_norms.max()), 2.0 / kappa)
        w_opt = reference_optimum(model, data).w
        run = RunConfig(T=n, seed=derive_seed(cfg.seed, f"run-{n}", k))
        w = dynasaga_run(model, data, Schedule.linear(kappa, n), run, consts).final()
        subs.append(max(empirical_risk(model, w, data) - empirical_risk(model, w_opt, data), 0.0))
    return float(np.mean(subs))


def slope_experiment(cfg: SlopeConfig) -> SlopeReport:
    points = [(n, slope_point(n, cfg)) for n in cfg.sizes]
    return SlopeReport(points, analysis.slope_estimate(points), cfg)
