"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 infeasible optimization,
4 internal numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

import numpy as np

from .bb84 import FrequencyVector
from .config import ConfigError, ExperimentConfig
from .entropy_opt import InfeasibleError, NumericalError
from . import runner

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERIC = 4

log = logging.getLogger("vlqkd")


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vlqkd", description="Variable-length QKD key-rate experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "keyrate-fixed": "fixed-length key rate per acceptance radius",
        "keyrate-variable": "variable-length decision for one observed frequency vector",
        "fig1": "known-channel expected key rates",
        "fig2": "unpredictable-channel expected key rates",
        "hash-report": "Toeplitz and variable-length hashing experiments",
        "validate-config": "check a configuration file and print its canonical form",
    }
    for name, help_text in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="TOML configuration file (defaults built in)")
        p.add_argument("--seed", type=_u64, help="master seed override")
        p.add_argument("--trials", type=int, help="Monte Carlo trial count override")
        p.add_argument("--full", action="store_true", help="use the full trial count")
        p.add_argument("--out", help="output directory override")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "keyrate-variable":
            p.add_argument("--fobs", help="JSON list of 16 observed frequencies")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.from_toml(args.config) if args.config else ExperimentConfig()
    if args.trials is not None and args.trials < 1:
        raise ConfigError("--trials", "must be >= 1")
    return cfg.with_overrides(seed=args.seed, trials=args.trials, full=args.full, output_dir=args.out)


def _dispatch(args: argparse.Namespace, cfg: ExperimentConfig) -> None:
    cmd = args.command
    if cmd == "validate-config":
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        print(f"config sha256 {cfg.sha256()}", file=sys.stderr)
    elif cmd == "keyrate-fixed":
        print(json.dumps(runner.keyrate_fixed(cfg), indent=2))
    elif cmd == "keyrate-variable":
        fobs = None
        if args.fobs:
            try:
                fobs = FrequencyVector(np.array(json.loads(args.fobs), dtype=float))
            except (ValueError, TypeError) as exc:
                raise ConfigError("--fobs", str(exc)) from exc
        print(json.dumps(runner.keyrate_variable(cfg, fobs), indent=2))
    elif cmd == "fig1":
        res = runner.run_fig1(cfg)
        best = res.best_fixed
        print(f"wrote {cfg.output_dir}/fig1.csv")
        print(f"max Rbar_fixed = {best.mean:.6g} +- {best.stderr:.2g}")
        print(f"Rbar_variable  = {res.variable_rate.mean:.6g} +- {res.variable_rate.stderr:.2g}")
    elif cmd == "fig2":
        res = runner.run_fig2(cfg)
        best = res.best_fixed
        print(f"wrote {cfg.output_dir}/fig2.csv and fig2_variable.csv")
        print(f"max Rbar_fixed = {best.mean:.6g} +- {best.stderr:.2g}")
        print(f"Rbar_variable  = {res.variable_rate.mean:.6g} +- {res.variable_rate.stderr:.2g}")
    elif cmd == "hash-report":
        print(json.dumps(runner.run_hash_report(cfg).to_dict(), indent=2))


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args)
        _dispatch(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
