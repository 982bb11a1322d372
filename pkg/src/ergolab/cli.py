"""Command line entry point: ``ergolab run | list | validate``."""
from __future__ import annotations

import argparse
import sys
import time

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_DEGENERATE = 0, 2, 3, 4


def _load(path):
    from .config import load_config

    return load_config(path)


def _print_problems(exc):
    for p in getattr(exc, "problems", [str(exc)]):
        print(f"config error: {p}", file=sys.stderr)


def cmd_validate(args):
    from .config import ConfigError

    try:
        cfg = _load(args.config)
    except (ConfigError, OSError) as exc:
        _print_problems(exc)
        return EXIT_CONFIG
    print(f"ok: {cfg.experiment} on {cfg.system().label()}")
    return EXIT_OK


def cmd_list(args):
    from .dynsys import KINDS
    from .experiments import DESCRIPTIONS

    print("experiments:")
    for name, text in DESCRIPTIONS.items():
        print(f"  {name:24s} {text}")
    print("systems:")
    for k in KINDS:
        print(f"  {k}")
    return EXIT_OK


def cmd_run(args):
    from .config import ConfigError
    from .errors import BudgetExceeded, DomainError, MisuseError

    try:
        cfg = _load(args.config)
    except (ConfigError, OSError) as exc:
        _print_problems(exc)
        return EXIT_CONFIG
    if args.threads:
        import numba

        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    from .experiments import run
    from .report import emit

    fmt = args.format or cfg["output.format"]
    out = args.out or cfg["output.dir"]
    t0 = time.perf_counter()
    try:
        report = run(cfg)
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (DomainError, MisuseError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        paths = emit(report, fmt, out)
    except OSError as exc:
        print(f"cannot write report: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    print(f"runtime: {time.perf_counter() - t0:.3f} s", file=sys.stderr)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if report.budget_exceeded:
        return EXIT_BUDGET
    if report.degenerate:
        return EXIT_DEGENERATE
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="ergolab", description="Monte Carlo experiments on chaotic maps")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None, help="output directory (default: output.dir or .)")
    r.add_argument("--format", choices=("csv", "json"), default=None)
    r.add_argument("--threads", type=int, default=None)
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="check a configuration file")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_validate)
    ls = sub.add_parser("list", help="list experiments and systems")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
