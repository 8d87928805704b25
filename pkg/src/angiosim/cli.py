"""Command line front end.

Subcommands:
    run <config>     simulate one scenario, write trajectory + report files
    sweep <config>   cartesian parameter sweep, aggregate CSV
    verify           self-check battery (inequalities, entropy, elliptic oracles)
    fit <csv>        log-linear decay-rate fit on a trajectory column

Exit codes: 0 ok, 1 usage or config error, 2 blow-up detected, 3 numerical
failure (failed step or failed verification case).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import ConfigError, parse_config, parse_sweep
from .harness import (
    EXIT_USAGE,
    fit_report,
    run_scenario,
    run_sweep,
    verify_suite,
)


def _parse_window(text):
    try:
        lo, hi = text.split(":")
        window = (float(lo), float(hi))
    except ValueError:
        raise ConfigError(f"--window expects t0:t1, got '{text}'")
    if not window[0] < window[1]:
        raise ConfigError(f"--window needs t0 < t1, got '{text}'")
    return window


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="angiosim",
        description="Finite-volume simulator and verification harness for a "
        "chemotaxis-convection tumor angiogenesis model.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario from a key=value config")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="output directory (overrides config)")
    p_run.add_argument("--seed", type=int, help="RNG seed (overrides config)")
    p_run.add_argument("--quiet", action="store_true")

    p_sweep = sub.add_parser("sweep", help="cartesian sweep from a config with sweep.* axes")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--out", help="output directory (overrides config)")
    p_sweep.add_argument("--seed", type=int, help="RNG seed (overrides config)")
    p_sweep.add_argument("--quiet", action="store_true")

    p_verify = sub.add_parser("verify", help="run the built-in verification battery")
    p_verify.add_argument("--out", default="out")
    p_verify.add_argument("--quiet", action="store_true")
    p_verify.add_argument(
        "--debug-broken-tolerance",
        action="store_true",
        help="replace the fidelity tolerance with an unattainable one; "
        "the battery must then fail (self-test of the checker)",
    )

    p_fit = sub.add_parser("fit", help="fit a decay rate to a trajectory CSV column")
    p_fit.add_argument("csv")
    p_fit.add_argument("--column", required=True)
    p_fit.add_argument("--window", required=True, metavar="t0:t1")
    p_fit.add_argument("--quiet", action="store_true")

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = parse_config(args.config)
            if args.seed is not None:
                if args.seed < 0:
                    raise ConfigError("--seed must be >= 0")
                cfg = replace(cfg, seed=args.seed,
                              initial=replace(cfg.initial, seed=args.seed))
            if args.out is not None:
                cfg = replace(cfg, out_dir=args.out)
            return run_scenario(cfg, quiet=args.quiet)

        if args.command == "sweep":
            spec = parse_sweep(args.config)
            if args.seed is not None:
                if args.seed < 0:
                    raise ConfigError("--seed must be >= 0")
                spec.base_keys["seed"] = (str(args.seed), 0)
                spec = replace(spec, base=replace(
                    spec.base, seed=args.seed,
                    initial=replace(spec.base.initial, seed=args.seed)))
            out_dir = args.out if args.out is not None else spec.base.out_dir
            return run_sweep(spec, out_dir, quiet=args.quiet)

        if args.command == "verify":
            return verify_suite(out_dir=args.out, quiet=args.quiet,
                                broken_tolerance=args.debug_broken_tolerance)

        if args.command == "fit":
            return fit_report(args.csv, args.column,
                              _parse_window(args.window), quiet=args.quiet)

    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"file not found: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
