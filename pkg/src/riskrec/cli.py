"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. Error messages go to standard error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import pipeline
from .config import POLICIES, ConfigError, PipelineConfig
from .datagen import DataError
from .report import write_report

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
COMMANDS = ("simulate", "discretize", "select", "recommend", "evaluate", "report", "run")


def _cut_points(text: str) -> tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"--levels: expected comma-separated numbers, "
                                         f"got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--portfolio", help="portfolio CSV (default <out>/portfolio.csv)")
    common.add_argument("--levels", type=_cut_points, metavar="CSV",
                        help="dosage cut points between levels, e.g. 1.2,1.4,1.6")
    common.add_argument("--eps", type=float, help="propensity trimming threshold")
    common.add_argument("--p", type=float, help="CVaR tail probability")
    common.add_argument("--bootstrap", type=int, help="bootstrap replicates B")
    common.add_argument("--policy", action="append", choices=POLICIES,
                        help="policy to recommend with (repeatable; default all)")
    parser = argparse.ArgumentParser(
        prog="riskrec", description="Risk-aware credit-limit recommendation pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "generate a synthetic portfolio and its ground truth",
        "discretize": "partition observed dosages into levels",
        "select": "estimate root PEHE per candidate and level, pick the best",
        "recommend": "write per-customer decisions for each policy",
        "evaluate": "scenario tables and policy values",
        "report": "markdown summary of the output directory",
        "run": "every stage in order",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def make_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    return cfg.override(seed=args.seed, out=args.out, portfolio=args.portfolio,
                        cut_points=args.levels, trim_eps=args.eps, p=args.p,
                        bootstrap=args.bootstrap,
                        policies=tuple(dict.fromkeys(args.policy)) if args.policy else None)


def execute(command: str, cfg: PipelineConfig) -> list:
    if command == "simulate":
        return pipeline.simulate(cfg)
    if command == "report":
        path, missing = write_report(cfg.out_dir)
        for name in missing:
            print(f"report: missing artifact {name}", file=sys.stderr)
        return [path]
    paths = []
    if command == "run":
        paths += pipeline.simulate(cfg)
    ws = pipeline.Workspace.build(cfg)
    if command in ("discretize", "run"):
        paths += pipeline.run_discretize(cfg, ws)
    if command in ("select", "run"):
        paths += pipeline.run_select(cfg, ws)
    if command in ("recommend", "run"):
        paths += pipeline.run_recommend(cfg, ws)
    if command in ("evaluate", "run"):
        paths += pipeline.run_evaluate(cfg, ws)
    if command == "run":
        paths.append(write_report(cfg.out_dir)[0])
    return paths


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args)
        with np.errstate(all="ignore"):
            paths = execute(args.command, cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RuntimeError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
