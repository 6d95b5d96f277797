"""Command-line front end: ``medianqs zeta|reeb|measure|asymptotic|check``.

Every command prints one JSON document ``{"manifest": ..., "result": ...}``
(DOT output carries the manifest as a leading comment). Exit codes: 0 on
success, 1 when a property or bound check fails, 2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .errors import BoundViolationError, DomainError, ExpressionSyntaxError, NotDifferentiableError, PiTooSmallError

THREADS_ENV = "MEDIANQS_THREADS"


class UsageError(Exception):
    pass


def _positive(kind):
    def conv(text):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if not value > 0:
            raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
        return value

    return conv


def _schedule(text):
    try:
        values = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad schedule {text!r}") from None
    if len(values) < 4 or any(v <= 0 for v in values) or any(b <= a for a, b in zip(values, values[1:])):
        raise argparse.ArgumentTypeError("schedule needs at least 4 increasing positive values")
    return values


def _point(text):
    try:
        v = np.array([float(t) for t in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad point {text!r}") from None
    if v.shape != (3,) or np.linalg.norm(v) == 0:
        raise argparse.ArgumentTypeError("point needs three coordinates, not all zero")
    return v / np.linalg.norm(v)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="medianqs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--output", "-o", help="write the main output here instead of stdout")
    parser.add_argument("--mesh-json", help="also dump the mesh used as JSON to this path")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("zeta", help="median quasi-state of one observable")
    p.add_argument("--f", required=True)
    p.add_argument("--subdiv", type=int, default=6)

    p = sub.add_parser("reeb", help="measured Reeb tree of one observable")
    p.add_argument("--f", required=True)
    p.add_argument("--subdiv", type=int, default=6)
    p.add_argument("--format", choices=["dot", "json"], default="json")

    p = sub.add_parser("measure", help="pointer-model error at one duration and the bound check")
    p.add_argument("--f1", required=True)
    p.add_argument("--f2", required=True)
    p.add_argument("--T", type=_positive(float), required=True)
    p.add_argument("--eps", type=_positive(float), required=True)
    p.add_argument("--grid", type=_positive(int), default=2000)
    p.add_argument("--steps-per-radian", type=_positive(float), default=30.0)
    p.add_argument("--subdiv", type=int, default=6)
    p.add_argument("--trajectory-csv", help="dump the trajectory from --point to this CSV path")
    p.add_argument("--point", type=_point, default=np.array([1.0, 0.0, 0.0]))
    p.add_argument("--trajectory-steps", type=_positive(int), default=None,
                   help="default: --steps-per-radian times the total turning angle")

    p = sub.add_parser("asymptotic", help="liminf estimate of the error along a duration schedule")
    p.add_argument("--f1", required=True)
    p.add_argument("--f2", required=True)
    p.add_argument("--tau-schedule", type=_schedule, default=[50.0, 100.0, 200.0, 400.0, 800.0])
    p.add_argument("--grid", type=_positive(int), default=2000)
    p.add_argument("--steps-per-radian", type=_positive(float), default=30.0)
    p.add_argument("--subdiv", type=int, default=6)

    p = sub.add_parser("check", help="run a property battery")
    p.add_argument("--suite", required=True)
    p.add_argument("--seed", type=int, default=20240607)
    p.add_argument("--tol", type=_positive(float), default=None)
    p.add_argument("--trials", type=_positive(int), default=200)
    p.add_argument("--subdiv", type=int, default=6)
    return parser


def _manifest(args, duration) -> dict:
    flags = {}
    for k, v in sorted(vars(args).items()):
        if k in ("command", "output"):
            continue
        flags[k] = v.tolist() if isinstance(v, np.ndarray) else v
    return {
        "command": args.command,
        "flags": flags,
        "seed": getattr(args, "seed", None),
        "subdiv": getattr(args, "subdiv", None),
        "toolVersion": __version__,
        "wallClockSeconds": round(duration, 3),
    }


def _mesh(args):
    from .mesh import build_icosphere

    if not (0 <= args.subdiv <= 9):
        raise UsageError(f"--subdiv must be in [0, 9], got {args.subdiv}")
    m = build_icosphere(args.subdiv)
    if args.mesh_json:
        with open(args.mesh_json, "w", encoding="utf-8") as fh:
            fh.write(m.to_json())
    return m


def _field(text, m):
    from .expr import parse
    from .mesh import sample

    return sample(parse(text), m)


def cmd_zeta(args):
    from .quasistate import median_of_field

    return median_of_field(_field(args.f, _mesh(args))).to_dict(), 0


def cmd_reeb(args):
    from .reeb import build_reeb, export_dot

    tree = build_reeb(_field(args.f, _mesh(args)))
    if args.format == "dot":
        return export_dot(tree), 0
    return tree.to_dict(), 0


def cmd_measure(args):
    from .dynamics import FlowSpec, trajectory_csv, turning_rate
    from .expr import parse
    from .measurement import default_grid, verify_bound

    f1, f2 = parse(args.f1), parse(args.f2)
    _mesh(args)
    grid = default_grid(f1, f2, args.grid)
    code = 0
    try:
        rec = verify_bound(f1, f2, args.T, args.eps, grid, args.steps_per_radian, subdiv=args.subdiv)
    except BoundViolationError as exc:
        print(f"bound violation: {exc}", file=sys.stderr)
        from .measurement import delta

        rec = delta(f1, f2, args.T, args.eps, grid, args.steps_per_radian, subdiv=args.subdiv)
        code = 1
    if args.trajectory_csv:
        steps = args.trajectory_steps
        if steps is None:
            rate = float(turning_rate(f1 + f2, args.point)[0])
            steps = max(int(np.ceil(args.steps_per_radian * rate * args.eps * args.T)), 1)
        spec = FlowSpec(f1 + f2, args.eps, args.T, steps, args.point)
        with open(args.trajectory_csv, "w", encoding="utf-8") as fh:
            fh.write(trajectory_csv(spec))
    return rec.to_dict(), code


def cmd_asymptotic(args):
    from .expr import parse
    from .measurement import asymptotic_delta, default_grid

    f1, f2 = parse(args.f1), parse(args.f2)
    _mesh(args)
    grid = default_grid(f1, f2, args.grid)
    res = asymptotic_delta(f1, f2, args.tau_schedule, grid, args.steps_per_radian, args.subdiv)
    return res.to_dict(), 0


def cmd_check(args):
    log = lambda msg: print(msg, file=sys.stderr)  # noqa: E731
    if args.suite == "quasistate":
        from .quasistate import SuiteConfig, check_properties

        tol = 0.02 if args.tol is None else args.tol
        _mesh(args)
        report = check_properties(SuiteConfig(args.seed, args.subdiv, args.trials, tol), log)
    elif args.suite == "dynamics":
        from .dynamics import check_properties

        report = check_properties(args.seed, args.trials, log)
    elif args.suite == "measurement":
        from .measurement import TOL_BOUND, BatteryConfig, check_properties

        tol = TOL_BOUND if args.tol is None else args.tol
        _mesh(args)
        report = check_properties(BatteryConfig(seed=args.seed, subdiv=args.subdiv, tol_bound=tol), log)
    else:
        raise UsageError(f"unknown suite {args.suite!r}; choose quasistate, dynamics or measurement")
    return report.to_dict(), 0 if report.passed else 1


COMMANDS = {
    "zeta": cmd_zeta,
    "reeb": cmd_reeb,
    "measure": cmd_measure,
    "asymptotic": cmd_asymptotic,
    "check": cmd_check,
}


def _configure_threads():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return
    import numba

    try:
        n = int(value)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {value!r}") from None
    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def render(payload, manifest) -> str:
    if isinstance(payload, str):
        return f"// {json.dumps(manifest, sort_keys=True)}\n{payload}"
    return json.dumps({"manifest": manifest, "result": payload}, sort_keys=True, indent=2) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    start = time.perf_counter()
    try:
        _configure_threads()
        payload, code = COMMANDS[args.command](args)
    except (UsageError, ExpressionSyntaxError, DomainError, NotDifferentiableError, PiTooSmallError, ValueError) as exc:
        print(f"medianqs: error: {exc}", file=sys.stderr)
        return 2
    text = render(payload, _manifest(args, time.perf_counter() - start))
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
