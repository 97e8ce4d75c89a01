"""Log-log slope of one-pass dynaSAGA suboptimality as kappa grows with n.

Runs both kappa rules and prints the per-size means and the fitted slopes.
With --grid it also sweeps dimension and noise level.
"""
import argparse
import dataclasses
import time

from dynasaga.harness import SlopeConfig, slope_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--grid", action="store_true", help="sweep d in {2,5,10} and sigma in {0.5,1,2,3,5}")
    args = ap.parse_args()

    base = SlopeConfig(seeds=args.seeds, seed=args.seed)
    for rule in ("sqrt", "0.75"):
        start = time.perf_counter()
        rep = slope_experiment(dataclasses.replace(base, kappa_rule=rule))
        print(f"kappa rule {rule}: slope {rep.slope:.3f} ({time.perf_counter() - start:.1f}s)")
        for n, sub in rep.points:
            print(f"  n={n:6d}  mean subopt {sub:.4e}")

    if args.grid:
        print("d,sigma,slope_sqrt,slope_0.75")
        for d in (2, 5, 10):
            for sigma in (0.5, 1.0, 2.0, 3.0, 5.0):
                cfg = dataclasses.replace(base, d=d, sigma=sigma)
                a = slope_experiment(dataclasses.replace(cfg, kappa_rule="sqrt")).slope
                b = slope_experiment(dataclasses.replace(cfg, kappa_rule="0.75")).slope
                print(f"{d},{sigma},{a:.3f},{b:.3f}")


if __name__ == "__main__":
    main()
