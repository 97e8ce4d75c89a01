"""Optimal sample-size schedules under the convergence-bound recursion.

Prints the exhaustive optimum for a small instance next to the Linear
schedule, then the Linear path against the closed-form two-pass bound.
"""
import argparse

import numpy as np

from dynasaga.analysis import (
    BoundConfig,
    linear_path_values,
    linear_schedule_vector,
    optimal_schedule_bruteforce,
    schedule_value,
    two_pass_bound,
    u_diagonal,
)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--kappa", type=float, default=4.0)
    ap.add_argument("--n-max", type=int, default=10_000)
    args = ap.parse_args()

    cfg = BoundConfig(kappa=args.kappa)
    T = 2 * args.n
    opt = optimal_schedule_bruteforce(args.n, T, cfg)
    lin = linear_schedule_vector(args.n, T, max(1, int(np.ceil(args.kappa))))
    print(f"n={args.n}, T={T}, kappa={args.kappa}")
    print(f"  optimal value {schedule_value(opt, cfg):.6g}, linear {schedule_value(lin, cfg):.6g}")
    print(f"  optimal interior mode {opt.interior_mode()}, gaps: {opt.has_skips()}")
    print("  steps per size (optimal):", opt.t.tolist())

    ns, path = linear_path_values(args.n_max, cfg)
    bound = two_pass_bound(ns.astype(float), cfg)
    dn, diag = u_diagonal(args.n_max, cfg)
    diag = diag[ns[0] - dn[0]:]
    print(f"linear path / two-pass bound: max {np.max(path / bound):.4f}")
    print(f"optimal U(2n,n) / linear path: min {np.min(diag / path):.4f}, max {np.max(diag / path):.4f}")
    for n in (10, 100, 1000, args.n_max):
        j = n - ns[0]
        if 0 <= j < len(ns):
            print(f"  n={n:6d}  U_opt={diag[j]:.4e}  U_lin={path[j]:.4e}  bound={bound[j]:.4e}")


if __name__ == "__main__":
    main()
