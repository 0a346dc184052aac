"""Command-line entry point: ``generate``, ``run`` and ``report``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import pathlib
import sys
import warnings

from momentum_workbench import pipeline
from momentum_workbench.backtest import BankruptcyError, MissingReturnError
from momentum_workbench.config import ConfigError, RunConfig
from momentum_workbench.dataset import InsufficientHistoryError
from momentum_workbench.errors import StageError
from momentum_workbench.market_data import MarketDataError
from momentum_workbench.predictor import PREDICTOR_KINDS, TrainingDivergedError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("momentum_workbench")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="momentum-workbench",
                description="Return-momentum forecasting and backtesting workbench.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write synthetic CSV bars to <out>/data")
    g.add_argument("--config", required=True)
    g.add_argument("--out")

    r = sub.add_parser("run", help="walk-forward train/predict, backtest, analysis")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.add_argument("--predictor", choices=PREDICTOR_KINDS)
    r.add_argument("--workers", type=int)

    rep = sub.add_parser("report", help="print the result table of a finished run")
    rep.add_argument("run_dir")
    rep.add_argument("--svg", help="also write the equity curve chart here")
    return p


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_USAGE
    if isinstance(exc, (TrainingDivergedError, BankruptcyError, FloatingPointError)):
        return EXIT_NUMERIC
    if isinstance(exc, (MarketDataError, InsufficientHistoryError, MissingReturnError,
                        FileNotFoundError, OSError, ValueError)):
        return EXIT_DATA
    raise exc


def _cmd_generate(args) -> int:
    cfg = RunConfig.load(args.config)
    if cfg.data_source.synthetic is None:
        raise ConfigError("generate needs a synthetic data_source")
    paths = pipeline.generate_data(cfg, args.out)
    for p in paths:
        print(p)
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = RunConfig.load(args.config).with_overrides(
        output_dir=args.out, predictor=args.predictor, workers=args.workers)
    outcome = pipeline.run_pipeline(cfg)
    print(pipeline.render_report(outcome.output_dir), end="")
    print(f"outputs written to {outcome.output_dir}")
    return EXIT_OK


def _cmd_report(args) -> int:
    print(pipeline.render_report(args.run_dir), end="")
    if args.svg:
        pathlib.Path(args.svg).write_text(pipeline.equity_svg(args.run_dir), encoding="utf-8")
    return EXIT_OK


COMMANDS = {"generate": _cmd_generate, "run": _cmd_run, "report": _cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                return COMMANDS[args.command](args)
            finally:
                for w in caught:
                    print(f"warning: {w.message}", file=sys.stderr)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - mapped to an exit code or re-raised
        code = _exit_code(exc)
        kind = {EXIT_USAGE: "usage", EXIT_DATA: "data", EXIT_NUMERIC: "numeric"}[code]
        print(f"{kind} error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
