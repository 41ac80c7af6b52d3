#!/usr/bin/env python3
"""CLI tool for paradifferential lab runs."""

import sys
import json
import logging
import argparse
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

from src.config import settings
from src.models import NormKind, Report, RunConfig
from src.pipeline import LabPipeline
from src.verify_service import SUITES

SPACE_KINDS = {
    "F": NormKind.TRIEBEL_LIZORKIN,
    "B": NormKind.BESOV,
    "Bhom": NormKind.HOMOGENEOUS_BESOV,
    "L": NormKind.LEBESGUE,
}


def setup_logging(level: str = "INFO"):
    """Configure logging for the application."""
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(sys.stdout),
            logging.FileHandler(settings.log_file)
        ]
    )


def _float_list(text: str) -> List[float]:
    return [float(v) for v in text.split(",")]


def _int_list(text: str) -> List[int]:
    return [int(v) for v in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Type 1,1 pseudodifferential operators on the torus: decompose, apply, measure and verify"
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    common.add_argument("--dim", type=int, choices=[1, 2], help="Torus dimension")
    common.add_argument("--N", dest="n_points", type=int, help="Grid points per axis (power of two >= 64)")
    common.add_argument("--J", dest="j_max", type=int, help="Top dyadic level (largest resolved by default)")
    common.add_argument("--symbol", help="identity, constant, bessel, ching, smooth, reduced, nonlinear, cutoff, sampled")
    common.add_argument("--symbol-file", help="Sample file for --symbol sampled")
    common.add_argument("--d", type=float, help="Order of bessel/ching symbols and of the theta family")
    common.add_argument("--C", dest="cone", type=float, help="Cone constant of the cutoff symbol")
    common.add_argument("--value", type=float, help="Value of the constant symbol")
    common.add_argument("--count", type=int, help="Multipliers of the reduced symbol")
    common.add_argument("--function", help="Nonlinearity of the nonlinear symbol: square, sin, tanh")
    common.add_argument("--input", help="random, constant, theta:N=2[,3] or a grid-function file")
    common.add_argument("--space", choices=sorted(SPACE_KINDS), help="Space family for norm/probe")
    common.add_argument("--s", type=float, help="Smoothness index")
    common.add_argument("--p", type=float, help="Integrability exponent (inf allowed)")
    common.add_argument("--q", type=float, help="Summability exponent (inf allowed)")
    common.add_argument("--seed", type=int, help=f"Master seed (default: {settings.default_seed})")
    common.add_argument("--out", dest="out_dir", help="Run directory for report.json and CSV tables")
    common.add_argument("--threads", type=int, help="Worker cap; results do not depend on it")
    common.add_argument("--no-store", action="store_true", help="Don't write the report to disk")
    common.add_argument(
        "--log-level",
        default=settings.log_level,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level"
    )

    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("decompose", parents=[common], help="Split an input into dyadic blocks")
    apply_parser = commands.add_parser("apply", parents=[common], help="Apply a symbol through the three series")
    apply_parser.add_argument("--oracle", action="store_true", default=None, help="Compare with direct quadrature")
    commands.add_parser("norm", parents=[common], help="Measure a Besov/Triebel-Lizorkin/Lebesgue norm")
    verify_parser = commands.add_parser("verify", parents=[common], help="Run a verification suite")
    verify_parser.add_argument("--suite", choices=list(SUITES) + ["all"], help="Suite name (default: all)")
    verify_parser.add_argument("--twisted-C", dest="twisted_c", type=float, help="Cone constant of the twisted-diagonal bound")
    cex_parser = commands.add_parser("counterexample", parents=[common], help="Reproduce the theta_N divergence")
    cex_parser.add_argument("--N-range", dest="n_range", type=_int_list, help="Family indices, e.g. 2,3")
    cex_parser.add_argument("--q-list", dest="q_list", type=_float_list, help="e.g. 1,2,inf")
    cex_parser.add_argument("--t-list", dest="t_list", type=_float_list, help="e.g. 1,2,inf")
    cex_parser.add_argument("--r-theta", dest="r_theta", type=int, help="Radius of the base profile spectrum")
    probe_parser = commands.add_parser("probe", parents=[common], help="Boundedness or Marschall probe")
    probe_parser.add_argument("--probe", choices=["boundedness", "marschall"], help="Probe kind")
    probe_parser.add_argument("--t", type=float, help="Maximal-function exponent in (0, 1]")
    probe_parser.add_argument("--k", type=int, help="Frequency level of the Marschall probe")
    probe_parser.add_argument("--samples", type=int, help="Random inputs of the boundedness probe")
    probe_parser.add_argument("--twisted-C", dest="twisted_c", type=float, help="Use r = q when the symbol passes")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Merge the optional JSON config file with the flags that were given."""
    data: Dict[str, Any] = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
    data["command"] = args.command

    for name in ("dim", "n_points", "j_max", "input", "d", "seed", "out_dir", "threads", "suite", "twisted_c",
                 "n_range", "q_list", "t_list", "r_theta", "probe", "t", "k", "samples", "oracle"):
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value

    symbol = dict(data.get("symbol") or {})
    for flag, key in (("symbol", "name"), ("symbol_file", "path"), ("cone", "C"), ("value", "value"),
                      ("count", "count"), ("function", "function"), ("seed", "seed")):
        value = getattr(args, flag, None)
        if value is not None:
            symbol[key] = value
    if args.d is not None:
        symbol["d"] = args.d
    if args.symbol_file is not None and "name" not in symbol:
        symbol["name"] = "sampled"
    if "name" in symbol:
        data["symbol"] = symbol

    space = dict(data.get("space") or {})
    if args.space is not None:
        space["kind"] = SPACE_KINDS[args.space]
    for name in ("s", "p", "q"):
        value = getattr(args, name, None)
        if value is not None:
            space[name] = value
    if space:
        space.setdefault("kind", NormKind.TRIEBEL_LIZORKIN)
        space.setdefault("p", 2.0)
        data["space"] = space

    return RunConfig.model_validate(data)


def print_report(report: Report) -> None:
    print("\n" + "="*80)
    print(f"{report.command.value.upper()} RUN {report.run_id}")
    print("="*80)
    for key, value in report.summary.items():
        print(f"{key}: {value}")
    if report.checks:
        passed = sum(c.passed for c in report.checks)
        print(f"\nChecks passed: {passed}/{len(report.checks)}")
        failure = report.first_failure
        if failure is not None:
            print(f"First failing claim: {failure.name} (value {failure.value:.6g}, tolerance {failure.tolerance:.6g})"
                  + (f" {failure.detail}" if failure.detail else ""))
    print("="*80 + "\n")


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point."""
    args = build_parser().parse_args(argv)

    # Setup logging
    setup_logging(args.log_level)
    logger = logging.getLogger(__name__)

    try:
        config = config_from_args(args)

        pipeline = LabPipeline()
        report = pipeline.run(config, store_result=not args.no_store)
        print_report(report)

        return 0 if report.passed else 1

    except KeyboardInterrupt:
        logger.warning("Process interrupted by user")
        return 130
    except Exception as e:
        logger.error(f"Error: {e}", exc_info=True)
        print(f"\nError: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
