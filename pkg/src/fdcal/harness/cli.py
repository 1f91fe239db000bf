"""Command-line entry point: ``fdcal {ratio,rates,crlb,trial}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ..errors import ConfigError, EstimationError, FdcalError, InfeasibleScenarioError, UsageError
from .config import default_config, default_config_text, load_config
from .experiments import (SyntheticConfig, run_crlb_validation, run_rate_experiment, run_ratio_experiment,
                          run_trial_experiment)
from .records import OutputError, csv_text, emit_csv, emit_plot_script

log = logging.getLogger("fdcal")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_INFEASIBLE = 3


def _int_list(text):
    try:
        values = [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="transceiver config file (defaults built in)")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--mode", choices=("linear", "wl"), help="canceller model (overrides the config)")
    common.add_argument("--out", type=Path, help="CSV output path; a .py plot script is written beside it")
    common.add_argument("--trials", type=int, help="Monte-Carlo trials per point")
    common.add_argument("--parallel", type=int, default=1, help="worker processes (default 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fdcal",
                                     description="Full-duplex SI channel estimation with and without calibration.")
    parser.add_argument("--dump-config", action="store_true", help="print the default config file and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("ratio", parents=[common], help="sample-size ratio N/N_c matching calibrated SINR")
    p.add_argument("--nc", type=_int_list, default=[500, 1000, 2000], help="comma-separated N_c values")

    p = sub.add_parser("rates", parents=[common], help="achievable rates over coherence time")
    p.add_argument("--n", type=_int_list, default=[500, 5000], help="comma-separated N values")
    p.add_argument("--tcoh-min", type=float, default=1e-4)
    p.add_argument("--tcoh-max", type=float, default=1e-1)
    p.add_argument("--tcoh-points", type=int, default=31)

    p = sub.add_parser("crlb", parents=[common], help="LS variance against the bound on synthetic data")
    p.add_argument("--n", type=_int_list, default=[512, 1024, 2048, 4096, 8192, 16384])
    p.add_argument("--m", type=int, default=8, help="taps per transmit stream")

    p = sub.add_parser("trial", parents=[common], help="SINR at one training length")
    p.add_argument("--n", type=int, default=5000, help="training samples")
    return parser


def _load(args):
    cfg = load_config(args.config) if args.config else default_config()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.mode is not None:
        changes["mode"] = args.mode
    return cfg.with_(**changes) if changes else cfg


def _run(args):
    cfg = _load(args)
    if args.command == "ratio":
        return run_ratio_experiment(cfg, args.nc, trials=args.trials or 50, parallel=args.parallel)
    if args.command == "rates":
        if not 0 < args.tcoh_min <= args.tcoh_max or args.tcoh_points < 1:
            raise UsageError("need 0 < --tcoh-min <= --tcoh-max and --tcoh-points >= 1")
        grid = np.logspace(np.log10(args.tcoh_min), np.log10(args.tcoh_max), args.tcoh_points)
        return run_rate_experiment(cfg, args.n, grid, trials=args.trials or 50, parallel=args.parallel)
    if args.command == "crlb":
        synth = SyntheticConfig(m=args.m, seed=cfg.seed, mode=cfg.mode)
        return run_crlb_validation(synth, args.n, trials=args.trials or 1000, parallel=args.parallel)
    return run_trial_experiment(cfg, args.n, trials=args.trials or 1)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.dump_config:
        sys.stdout.write(default_config_text())
        return EXIT_OK
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        records = _run(args)
        if args.out:
            path = emit_csv(records, args.out)
            emit_plot_script(records, path.with_suffix(".py"), csv_name=path.name)
            log.info("wrote %s", path)
        else:
            sys.stdout.write(csv_text(records))
        if all("infeasible" in r.flags for r in records):
            print("fdcal: every requested point is infeasible", file=sys.stderr)
            return EXIT_INFEASIBLE
    except InfeasibleScenarioError as exc:
        print(f"fdcal: infeasible scenario: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, UsageError) as exc:
        print(f"fdcal: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EstimationError, OutputError, FdcalError) as exc:
        print(f"fdcal: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
