"""Command line entry point.

Subcommands: ``experiment`` and ``timing`` run a JSON-configured sweep,
``crb`` is a restriction of ``experiment`` to the bound computation only,
``selftest`` runs the built-in invariant checks.  Exit codes: 0 on success,
2 on configuration problems (including unreadable or malformed JSON), 3 on
numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from .exceptions import ConfigError, NumericalError

__all__ = ["main", "build_parser"]


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("config", help="path to a JSON experiment config")
    sub.add_argument("--seed", type=int, help="override the master seed")
    sub.add_argument("--trials", type=int, help="override the trial count")
    sub.add_argument("--out", help="override the output CSV path")
    sub.add_argument("--threads", type=int,
                     help="worker process count (default: config, then "
                          "CPCHAN_THREADS, then 1)")
    sub.add_argument("--quiet", action="store_true",
                     help="suppress progress output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpchan",
        description="Tensor-decomposition channel estimation workbench")
    subs = parser.add_subparsers(dest="command", required=True)
    for name, description in (
            ("experiment", "run a Monte-Carlo sweep and write CSV results"),
            ("timing", "run wall-time benchmarks and write CSV results"),
            ("crb", "compute estimation bounds only (methods forced to crb)")):
        sub = subs.add_parser(name, help=description)
        _add_common(sub)
    bench = subs.add_parser(
        "backend-bench",
        help="time the jit and numpy sweep kernels side by side")
    bench.add_argument("--k-values", default="8,16,32,64",
                       help="comma-separated training subcarrier counts")
    bench.add_argument("--sweeps", type=int, default=10,
                       help="sweeps per timed run")
    bench.add_argument("--reps", type=int, default=5,
                       help="timed runs per size and backend")
    bench.add_argument("--seed", type=int, default=0,
                       help="master seed for the timed datasets")
    bench.add_argument("--out", help="write CSV here instead of stdout")
    bench.add_argument("--quiet", action="store_true",
                       help="suppress progress output")
    sel = subs.add_parser("selftest", help="run built-in invariant checks")
    sel.add_argument("--quiet", action="store_true",
                     help="only report failures")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    return {"seed": args.seed, "trials": args.trials, "out": args.out,
            "threads": args.threads}


def _cmd_experiment(args: argparse.Namespace, forced_methods=None) -> int:
    from .experiments import (SUMMARY_COLUMNS, load_config, run_experiment,
                              summary_path)

    overrides = _overrides(args)
    if forced_methods is not None:
        overrides["methods"] = list(forced_methods)
    cfg = load_config(args.config, overrides)
    rows, summary = run_experiment(cfg, quiet=args.quiet)
    if cfg.out is None:
        _print_csv(summary, SUMMARY_COLUMNS)
    elif not args.quiet:
        print(f"wrote {len(rows)} rows to {cfg.out} and "
              f"{len(summary)} aggregate rows to {summary_path(cfg.out)}")
    return 0


def _cmd_timing(args: argparse.Namespace) -> int:
    from .experiments import TIMING_COLUMNS, load_config, run_timing

    cfg = load_config(args.config, _overrides(args))
    rows = run_timing(cfg, quiet=args.quiet)
    if cfg.out is None:
        _print_csv(rows, TIMING_COLUMNS)
    elif not args.quiet:
        print(f"wrote {len(rows)} timing rows to {cfg.out}")
    return 0


def _cmd_backend_bench(args: argparse.Namespace) -> int:
    from .experiments import BENCH_COLUMNS, backend_bench, write_csv

    try:
        k_values = [int(part) for part in args.k_values.split(",") if part]
    except ValueError:
        raise ConfigError(f"--k-values must be comma-separated integers, "
                          f"got {args.k_values!r}") from None
    rows = backend_bench(k_values=k_values, sweeps=args.sweeps,
                         reps=args.reps, seed=args.seed, quiet=args.quiet)
    if args.out is None:
        _print_csv(rows, BENCH_COLUMNS)
    else:
        write_csv(args.out, BENCH_COLUMNS, rows)
        if not args.quiet:
            print(f"wrote {len(rows)} benchmark rows to {args.out}")
    return 0


def _print_csv(rows: list[dict], columns: list[str]) -> None:
    import csv

    from .experiments import _format_cell

    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format_cell(row.get(col, "")) for col in columns])


def _cmd_selftest(args: argparse.Namespace) -> int:
    from .selftest import run_selftest

    return 0 if run_selftest(quiet=args.quiet) else 3


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "experiment":
            return _cmd_experiment(args)
        if args.command == "timing":
            return _cmd_timing(args)
        if args.command == "crb":
            return _cmd_experiment(args, forced_methods=("crb",))
        if args.command == "backend-bench":
            return _cmd_backend_bench(args)
        return _cmd_selftest(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
