"""Randomised check of both error inequalities on quadratic observable pairs.

Prints one line per pair to stderr and the CSV (F1, F2, tau, delta, boundRhs,
verified) to stdout."""

import argparse
import sys

from medianqs.measurement import BatteryConfig, run_battery


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=20240607)
    ap.add_argument("--pairs", type=int, default=50)
    ap.add_argument("--grid", type=int, default=2000)
    args = ap.parse_args()

    cfg = BatteryConfig(seed=args.seed, pairs=args.pairs, grid_size=args.grid)
    res = run_battery(cfg, log=lambda msg: print(msg, file=sys.stderr))
    sys.stdout.write(res.to_csv())
    bad4 = sum(not r.verified for r in res.bound_rows)
    bad5 = sum(r.margin < 0 for r in res.asymptotic_rows)
    print(f"violations: inequality (4) {bad4}, tail-min inequality {bad5}", file=sys.stderr)
    return 1 if bad4 or bad5 else 0


if __name__ == "__main__":
    sys.exit(main())
