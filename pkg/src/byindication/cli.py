"""Command-line interface.

Exit codes: 0 success, 2 usage or configuration error, 3 invalid or missing
input, 4 numerical failure, 5 convergence gate (R-hat above the limit).
"""
from __future__ import annotations

import argparse
import sys

from .cohort import CohortValidationError
from .config import ConfigError, load_config
from .diagnostics import DiagnosticError
from .matching import MatchingError
from .model import LikelihoodError
from .pipeline import (ConvergenceError, cmd_diagnose, cmd_fit, cmd_match, cmd_report, cmd_rsm,
                       cmd_simulate, cmd_validate)
from .rsm import format_rsm_table
from .sampler import SamplerError
from .tables import TableError

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC, EXIT_CONVERGENCE = 0, 2, 3, 4, 5

COMMANDS = ("simulate", "validate", "match", "fit", "report", "rsm", "diagnose")


def _add_common(parser: argparse.ArgumentParser, suppress: bool) -> None:
    # subcommand copies suppress their defaults so flags given before the command survive
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=d(None),
                        help="path to a key = value configuration file")
    parser.add_argument("--seed", type=int, default=d(None), help="random seed")
    parser.add_argument("--threads", type=int, default=d(1), help="worker processes for chains")
    parser.add_argument("--chains", type=int, default=d(None), help="number of chains")
    parser.add_argument("--allow-unconverged", action="store_true", default=d(False),
                        help="do not fail when R-hat exceeds the limit")


HELPS = {
    "simulate": "write a synthetic cohort with its truth table",
    "validate": "check the input files",
    "match": "match treated units to controls on baseline covariates",
    "fit": "fit the model for every study window",
    "report": "write effect, risk-set, curve and balance tables",
    "rsm": "write the risk-set matching table only",
    "diagnose": "recompute convergence diagnostics from stored draws",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="byindication", description=__doc__.splitlines()[0])
    _add_common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELPS[name])
        _add_common(p, suppress=True)
        if name == "simulate":
            p.add_argument("--n-units", type=int, help="number of units to simulate")
    return parser


def _print_effects(report, out) -> None:
    print("window,n1,n0_median,surv_treated,surv_control,tau,tau_lo,tau_hi", file=out)
    for e in report.effects:
        print(f"{e.window},{e.n1},{e.n0_median:g},{e.surv_treated:.3f},{e.surv_control:.3f},"
              f"{e.tau_mean:.3f},{e.tau_lo:.3f},{e.tau_hi:.3f}", file=out)


def run(argv=None, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE

    def log(msg):
        print(msg, file=err)

    try:
        cfg = load_config(args.config)
        overrides = {"seed": args.seed, "chains": args.chains}
        if args.command == "simulate":
            overrides["n_units"] = getattr(args, "n_units", None)
        cfg = cfg.with_overrides(**overrides)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if args.command == "simulate":
            paths = cmd_simulate(cfg, cfg.seed)
            for name, path in paths.items():
                print(f"{name}: {path}", file=out)
        elif args.command == "validate":
            summary = cmd_validate(cfg)
            print(", ".join(f"{k}={v}" for k, v in summary.items()), file=out)
        elif args.command == "match":
            result = cmd_match(cfg)
            print(f"{len(result.pairs)} pairs, {len(result.retained_controls)} distinct controls",
                  file=out)
        elif args.command == "fit":
            fits = cmd_fit(cfg, args.threads, args.allow_unconverged, log)
            if cfg.chains < 2:
                log("rhat omitted: the Gelman-Rubin statistic needs at least two chains")
            print(f"fitted {len(fits)} windows into {cfg.out_dir}", file=out)
        elif args.command == "report":
            _print_effects(cmd_report(cfg), out)
        elif args.command == "rsm":
            for row in format_rsm_table(cmd_rsm(cfg)):
                print(",".join(row), file=out)
        elif args.command == "diagnose":
            for K, rows in cmd_diagnose(cfg).items():
                for r in rows:
                    z = ",".join(f"{v:.3f}" for v in r.geweke)
                    rh = "" if r.rhat is None else f",{r.rhat:.4f}"
                    print(f"{K},{r.parameter},{z}{rh}", file=out)
    except ConfigError as exc:
        log(f"error: {exc}")
        return EXIT_USAGE
    except (CohortValidationError, FileNotFoundError, TableError, MatchingError, KeyError) as exc:
        log(f"error: {exc}")
        return EXIT_INPUT
    except (SamplerError, LikelihoodError, DiagnosticError, FloatingPointError,
            ArithmeticError) as exc:
        log(f"numerical failure: {exc}")
        return EXIT_NUMERIC
    except ConvergenceError as exc:
        log(f"not converged: {exc}")
        return EXIT_CONVERGENCE
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
