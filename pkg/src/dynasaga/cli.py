"""Command line: run, synth, analyze, slopes, optimum.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical
failure (reference optimum not converged).
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import sys
from pathlib import Path

import numpy as np

from dynasaga import analysis, harness
from dynasaga.data import SyntheticConfig, generate_classification, generate_regression, serialize_libsvm
from dynasaga.errors import InstanceTooLargeError, NotStronglyConvexError, ParseError, ReferenceOptimumError
from dynasaga.model import LossModel

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

# short flags from the interface description mapped onto config keys
_ALIASES = {"method": "methods"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _open_out(path):
    if not path or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline="\n"), True


def _write(path, text):
    fh, close = _open_out(path)
    try:
        fh.write(text)
    finally:
        if close:
            fh.close()


def _csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(header + "\n")
    for row in rows:
        buf.write(",".join(format(v, ".17g") if isinstance(v, float) else str(v) for v in row) + "\n")
    return buf.getvalue()


def _add_run(sub):
    p = sub.add_parser("run", help="multi-seed experiment")
    p.add_argument("--config", help="flat key = value file")
    for f in dataclasses.fields(harness.ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            p.add_argument(flag, dest=f.name, action="store_const", const="true", default=None)
            p.add_argument("--no-" + f.name.replace("_", "-"), dest=f.name, action="store_const", const="false")
        else:
            p.add_argument(flag, dest=f.name, default=None)
    p.add_argument("--method", dest="methods", default=None, help="alias of --methods")
    p.add_argument("--lambda", dest="lam", default=None, help="constant lambda")


def _cmd_run(args):
    values = harness.read_config_file(args.config) if args.config else {}
    for f in dataclasses.fields(harness.ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    cfg = harness.ExperimentConfig.from_mapping(values)
    report = harness.run_experiment(cfg)
    harness.emit_csv(report, cfg.out or "-")
    return EXIT_OK


def _add_synth(sub):
    p = sub.add_parser("synth", help="write a synthetic dataset in LIBSVM format")
    p.add_argument("--task", choices=("classification", "regression"), default="regression")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--min-eig", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out", default="-")


def _cmd_synth(args):
    cfg = SyntheticConfig(n=args.n, d=args.d, sigma_noise=args.sigma, min_eig=args.min_eig, seed=args.seed)
    if args.task == "classification":
        data, _ = generate_classification(cfg, normalize_rows=args.normalize)
    else:
        data, _ = generate_regression(cfg)
    fh, close = _open_out(args.out)
    try:
        serialize_libsvm(data, fh)
    finally:
        if close:
            fh.close()
    return EXIT_OK


def _add_analyze(sub):
    p = sub.add_parser("analyze", help="bounds, U(t, m) table, optimal schedules")
    p.add_argument("what", choices=("vfixed", "mstar", "utable", "path", "bounds", "optimal"))
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--T", type=int, default=0, help="0 -> 2n")
    p.add_argument("--kappa", type=float, default=4.0)
    p.add_argument("--D", type=float, default=1.0)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--xi", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--out", default="-")


def _cmd_analyze(args):
    cfg = analysis.BoundConfig(D=args.D, alpha=args.alpha, C=args.C, xi=args.xi, kappa=args.kappa)
    n = args.n
    T = args.T or 2 * n
    if args.what == "vfixed":
        ms = np.arange(1, n + 1)
        text = _csv("m,V", zip(ms, map(float, analysis.fixed_size_bound(ms, n, cfg))))
    elif args.what == "mstar":
        text = f"n,m_star\n{n},{analysis.optimal_fixed_size(n, cfg)}\n"
    elif args.what == "utable":
        tab = analysis.u_recursion_dp(T, n, cfg)
        rows = ((t, m, float(tab.U[t, m - tab.m_min]), int(tab.switched[t, m - tab.m_min]))
                for t in range(T + 1) for m in range(tab.m_min, n + 1))
        text = _csv("t,m,U,switched", rows)
    elif args.what == "path":
        tab = analysis.u_recursion_dp(T, n, cfg)
        text = _csv("t,m,U", ((t, m, tab.value(t, m)) for t, m in tab.path()))
    elif args.what == "optimal":
        ts = analysis.optimal_schedule_bruteforce(n, T, cfg)
        lin = analysis.linear_schedule_vector(n, T, max(1, int(np.ceil(cfg.kappa - 1e-9))))
        text = f"# A_optimal = {analysis.schedule_value(ts, cfg)!r}\n# A_linear = {analysis.schedule_value(lin, cfg)!r}\n"
        text += _csv("m,t_optimal,t_linear", ((m, int(ts.t[m - 1]), int(lin.t[m - 1])) for m in range(1, n + 1)))
    else:
        ns, u = analysis.linear_path_values(n, cfg)
        rows = ((int(k), float(v), float(analysis.two_pass_bound(int(k), cfg)), float(analysis.one_pass_bound(int(k), cfg)))
                for k, v in zip(ns, u))
        text = _csv("n,U_linear_2n_n,two_pass_bound,one_pass_bound", rows)
    _write(args.out, text)
    return EXIT_OK


def _add_slopes(sub):
    p = sub.add_parser("slopes", help="log-log slope experiment on synthetic least squares")
    p.add_argument("--kappa-rule", default="sqrt", help="sqrt or an exponent such as 0.75")
    p.add_argument("--sizes", default="512,1024,2048,4096,8192")
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")


def _cmd_slopes(args):
    try:
        sizes = tuple(int(s) for s in args.sizes.split(","))
    except ValueError:
        raise harness.ConfigError(f"bad size list {args.sizes!r}") from None
    cfg = harness.SlopeConfig(sizes=sizes, kappa_rule=args.kappa_rule, d=args.d, sigma=args.sigma,
                              seeds=args.seeds, seed=args.seed)
    rep = harness.slope_experiment(cfg)
    text = f"# kappa_rule = {cfg.kappa_rule}\n# slope = {rep.slope!r}\n"
    text += _csv("n,mean_emp_subopt", rep.points)
    _write(args.out, text)
    return EXIT_OK


def _add_optimum(sub):
    p = sub.add_parser("optimum", help="reference optimum of the empirical risk")
    p.add_argument("--data", required=True)
    p.add_argument("--task", choices=("classification", "regression"), default="classification")
    p.add_argument("--loss", choices=("logistic", "ls"), default="logistic")
    p.add_argument("--lambda-exp", type=float, default=0.5)
    p.add_argument("--lambda", dest="lam", type=float, default=-1.0)
    p.add_argument("--solver", choices=("newton", "saga"), default="newton")
    p.add_argument("--out", default="-")


def _cmd_optimum(args):
    from dynasaga.data import parse_libsvm

    data = parse_libsvm(Path(args.data), mode=args.task)
    lam = args.lam if args.lam >= 0 else len(data) ** -args.lambda_exp
    model = LossModel(harness.LOSS_ALIASES[args.loss], lam)
    res = harness.reference_optimum(model, data, args.solver)
    text = f"# residual = {res.residual!r}\n# status = {res.status}\n# lambda = {lam!r}\n"
    text += "".join(format(float(v), ".17g") + "\n" for v in res.w)
    _write(args.out, text)
    if res.status == "failed":
        raise ReferenceOptimumError(f"reference optimum not converged (gradient norm {res.residual:.3e})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dynasaga", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for add in (_add_run, _add_synth, _add_analyze, _add_slopes, _add_optimum):
        add(sub)
    return parser


_COMMANDS = {"run": _cmd_run, "synth": _cmd_synth, "analyze": _cmd_analyze, "slopes": _cmd_slopes,
             "optimum": _cmd_optimum}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ReferenceOptimumError as exc:
        print(f"dynasaga: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParseError, FileNotFoundError, IsADirectoryError, UnicodeDecodeError) as exc:
        print(f"dynasaga: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, InstanceTooLargeError, NotStronglyConvexError, OSError) as exc:
        print(f"dynasaga: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
