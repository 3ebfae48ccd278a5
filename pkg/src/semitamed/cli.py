"""Command-line front end.

Exit codes: 0 success, 1 validation failure, 2 usage or configuration error,
3 numerical divergence.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import kernels
from .convergence import (DEMO_CONFIG, ConfigError, ConvergenceConfig, strong_error,
                          write_report_csv, write_report_svg)
from .model import UnknownModel, get_problem, validate_index1
from .scheme import SchemeKind, simulate, write_trajectory_csv
from .wiener import generate, is_power_of_two

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return value


def _int_list(text):
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _scheme(text):
    try:
        return SchemeKind.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semitamed",
        description="Tamed semi-implicit solvers for index-1 stochastic DAEs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="sampled index-1 and hypothesis probes")
    p.add_argument("--model", required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=_seed, default=0)

    p = sub.add_parser("simulate", help="one trajectory to CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--scheme", type=_scheme, default=SchemeKind.DIRECT_TAMED)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--path-index", type=int, default=0)
    p.add_argument("--out", required=True)

    def add_workers(p):
        p.add_argument("--workers", type=int, default=None,
                       help="worker threads (default: available cores)")

    p = sub.add_parser("converge", help="strong-error study to CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--scheme", type=_scheme, default=SchemeKind.DIRECT_TAMED)
    p.add_argument("--nref", type=int, required=True)
    p.add_argument("--nlist", type=_int_list, required=True)
    p.add_argument("--paths", type=int, required=True)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--svg", default=None)
    add_workers(p)

    p = sub.add_parser("demo-paper", help="desk-scale strong-order experiment on paper-example")
    p.add_argument("--seed", type=_seed, default=DEMO_CONFIG.seed)
    p.add_argument("--out", default="demo-paper.csv")
    p.add_argument("--svg", default=None)
    add_workers(p)
    return parser


def _check_writable(path):
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory) or not os.access(directory, os.W_OK):
        raise OSError(f"cannot write to {path}")


def run_validate(args) -> int:
    problem = get_problem(args.model)
    if args.samples < 1:
        print("error: --samples must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    report = validate_index1(problem, args.samples, args.seed)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.ok else EXIT_INVALID


def run_simulate(args) -> int:
    problem = get_problem(args.model)
    if not is_power_of_two(args.steps):
        print(f"error: --steps must be a power of two, got {args.steps}", file=sys.stderr)
        return EXIT_USAGE
    _check_writable(args.out)
    w = generate(args.seed, args.path_index, problem.m, args.steps, problem.T)
    traj = simulate(problem, args.scheme, w)
    write_trajectory_csv(traj, args.out)
    print(f"final state: {' '.join(repr(float(x)) for x in traj.states[-1])}")
    if traj.diverged:
        print(f"trajectory diverged at step {traj.diverged_at}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _num(x):
    return f"{x:.4e}" if x == x else "n/a"


def _run_study(cfg, out, svg, workers) -> int:
    _check_writable(out)
    if svg:
        _check_writable(svg)
    report = strong_error(cfg, workers=workers)
    write_report_csv(report, out)
    if svg:
        write_report_svg(report, svg)
    print(f"{'N':>8} {'h':>12} {'error_p':>12} {'stderr':>12} {'diverged':>9}")
    for row in report.rows:
        print(f"{row.N:>8d} {row.h:>12.4e} {_num(row.error_p):>12} {_num(row.stderr):>12} "
              f"{row.diverged_fraction:>9.3f}")
    print(f"slope={report.slope:.4f} intercept={report.intercept:.4f} residual={report.residual:.4f}")
    return EXIT_OK


def run_converge(args) -> int:
    get_problem(args.model)
    cfg = ConvergenceConfig(problem=args.model, scheme=args.scheme, N_ref=args.nref,
                            N_list=args.nlist, M_paths=args.paths, p=args.p, seed=args.seed)
    return _run_study(cfg, args.out, args.svg, args.workers)


def run_demo(args) -> int:
    cfg = ConvergenceConfig(**{**DEMO_CONFIG.__dict__, "seed": args.seed})
    return _run_study(cfg, args.out, args.svg, args.workers)


def _print_config(args):
    items = {k: v.value if isinstance(v, SchemeKind) else v
             for k, v in sorted(vars(args).items())}
    if args.command == "demo-paper":
        items.update(model=DEMO_CONFIG.problem, scheme=DEMO_CONFIG.scheme.value,
                     nref=DEMO_CONFIG.N_ref, nlist=DEMO_CONFIG.N_list,
                     paths=DEMO_CONFIG.M_paths, p=DEMO_CONFIG.p)
    if "workers" in items and items["workers"] is None:
        items["workers"] = os.cpu_count() or 1
    items["backend"] = kernels.BACKEND
    text = " ".join(f"{k}={','.join(map(str, v)) if isinstance(v, tuple) else v}"
                    for k, v in items.items())
    print("config: " + text, flush=True)


COMMANDS = {
    "validate": run_validate,
    "simulate": run_simulate,
    "converge": run_converge,
    "demo-paper": run_demo,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _print_config(args)
    try:
        return COMMANDS[args.command](args)
    except UnknownModel as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
