"""Measurement error Delta(tau) against the lower bound 1/2 Pi - sqrt(2 osc / tau),
written as CSV (tau, delta, boundRhs)."""

import argparse
import sys

import numpy as np

from medianqs.expr import evaluate, parse
from medianqs.measurement import bound_rhs, default_grid, orbit_averages_schedule, osc_value, pi_value


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--f1", default="x^2")
    ap.add_argument("--f2", default="y^2")
    ap.add_argument("--tau-min", type=float, default=1.0)
    ap.add_argument("--tau-max", type=float, default=800.0)
    ap.add_argument("--points", type=int, default=40)
    ap.add_argument("--grid", type=int, default=2000)
    args = ap.parse_args()

    f1, f2 = parse(args.f1), parse(args.f2)
    taus = np.geomspace(args.tau_min, args.tau_max, args.points)
    w = default_grid(f1, f2, args.grid).points()
    m1, _, _ = orbit_averages_schedule(f1, f2, taus, w)
    errs = np.max(np.abs(m1 - evaluate(f1, w)[None, :]), axis=1)
    p, o = pi_value(f1, f2), osc_value(f1, f2)
    out = sys.stdout
    out.write("tau,delta,boundRhs\n")
    for tau, d in zip(taus, errs):
        out.write(f"{tau:.6g},{d:.6f},{bound_rhs(p, o, tau):.6f}\n")


if __name__ == "__main__":
    main()
