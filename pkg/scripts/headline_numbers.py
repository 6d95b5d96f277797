"""Reproduce the headline values: zeta on the basic observables, Pi(x^2, y^2),
the asymptotic measurement error for (x^2, y^2) and the resulting ratio."""

import argparse
import time

from medianqs.measurement import asymptotic_delta, default_grid, latitude_oracle
from medianqs.quasistate import pi, zeta


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--subdiv", type=int, default=6)
    ap.add_argument("--grid", type=int, default=4000)
    args = ap.parse_args()

    for text in ["x", "x^2", "x^2+y^2", "2*z^2+x+0.1*y*z"]:
        print(f"zeta({text}) = {zeta(text, args.subdiv):+.5f}")
    print(f"Pi(x^2, y^2) = {pi('x^2', 'y^2', args.subdiv):.5f}")

    t0 = time.perf_counter()
    res = asymptotic_delta("x^2", "y^2", grid=default_grid("x^2", "y^2", args.grid), subdiv=args.subdiv)
    print("Delta(tau):", ", ".join(f"{t:g}: {d:.4f}" for t, d in zip(res.schedule, res.series)))
    print(f"Delta_inf (tail min) = {res.delta_infinity:.4f}  [{time.perf_counter() - t0:.1f} s]")
    value, phi0, alpha = latitude_oracle()
    print(f"latitude oracle      = {value:.4f}  at phi0 = {phi0:.4f}, arc = {alpha:.4f} rad")
    print(f"2 Delta_inf / Pi     = {res.e_ratio:.4f}")


if __name__ == "__main__":
    main()
