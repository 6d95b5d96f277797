"""zeta of a few observables under mesh refinement, with the size of the
median's qualifying tolerance for scale."""

import argparse

from medianqs.mesh import build_icosphere, sample
from medianqs.quasistate import median_of_field

FIELDS = ["x", "x^2", "x^2+y^2", "x^2+y^2+0.3*z", "2*z^2+x+0.1*y*z", "sin(3*x)*y + z"]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-subdiv", type=int, default=7)
    args = ap.parse_args()

    ks = list(range(2, args.max_subdiv + 1))
    print("field".ljust(22) + "".join(f"k={k}".rjust(11) for k in ks))
    for text in FIELDS:
        row = [median_of_field(sample(text, build_icosphere(k))).zeta for k in ks]
        print(text.ljust(22) + "".join(f"{z:11.5f}" for z in row))
    print("tol_mass".ljust(22) + "".join(f"{2 * build_icosphere(k).max_dual_area:11.2e}" for k in ks))


if __name__ == "__main__":
    main()
