"""Command-line entry points.

Three subcommands:

``run``
    Execute one configured experiment; write per-trial records to ``--out``
    (CSV or JSON) or print the JSON aggregates to stdout.
``sweep``
    Cross the three methods with the three calibration attacks over the
    same base config, writing a combined results file plus two siblings:
    ``<out stem>.plot.csv`` (tidy long-format metrics) and
    ``<out stem>.hist.csv`` (trial-0 characterization vectors).
``oracle``
    Run the reference cross-checks (full-sharing equivalence and
    histogram-vs-pooled quantile agreement) and report pass/fail.

Exit codes: 0 success, 1 configuration error, 2 runtime error or failed
oracle check.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from . import oracles
from .attacks import COVERAGE, EFFICIENCY, RANDOM
from .experiment import (
    ConfigError,
    ExperimentConfig,
    METHODS,
    emit_plotdata,
    emit_histograms,
    emit_results,
    emit_sweep,
    run_experiment,
)

SWEEP_ATTACKS = (EFFICIENCY, COVERAGE, RANDOM)


class _Parser(argparse.ArgumentParser):
    """Argument errors are configuration errors (exit code 1)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="fedconformal",
        description="Byzantine-resilient federated conformal prediction simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment", parents=[])
    sweep_p = sub.add_parser("sweep", help="run methods x calibration attacks")
    for p in (run_p, sweep_p):
        p.add_argument("--config", help="JSON config file (defaults when omitted)")
        p.add_argument("--seed", type=int, help="override the config's master_seed")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
    run_p.add_argument("--out", help="result file (prints aggregates when omitted)")
    sweep_p.add_argument("--out", required=True, help="combined result file")

    oracle_p = sub.add_parser("oracle", help="run reference cross-checks")
    oracle_p.add_argument("--seed", type=int, help="re-seed the checks")
    return parser


def _load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        with open(path) as handle:
            doc = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(doc)


def _cmd_run(args) -> int:
    config = _load_config(args.config)
    if args.seed is not None:
        config = config.replace(master_seed=args.seed)
    result = run_experiment(config)
    if args.out:
        emit_results(result, args.out, args.format)
    else:
        print(json.dumps(result.aggregates, indent=2, sort_keys=True))
    return 0


def _cmd_sweep(args) -> int:
    base = _load_config(args.config)
    if args.seed is not None:
        base = base.replace(master_seed=args.seed)
    results = []
    for method in METHODS:
        for kind in SWEEP_ATTACKS:
            config = base.replace(
                method=method,
                attack=dataclasses.replace(base.attack, calibration=kind),
            )
            results.append(run_experiment(config, keep_characterizations=True))
    emit_sweep(results, args.out, args.format)
    stem = os.path.splitext(args.out)[0]
    emit_plotdata(results, stem + ".plot.csv")
    emit_histograms(results, stem + ".hist.csv")
    return 0


def _cmd_oracle(args) -> int:
    checks = oracles.run_all(args.seed)
    failed = False
    for check in checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"{status} {check.name}: {check.detail}")
        failed = failed or not check.passed
    return 2 if failed else 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_oracle(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
