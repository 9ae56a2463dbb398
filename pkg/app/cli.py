"""Command-line entry point: ``ors-sim run --config <path> --out <csv>``."""
import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from app.config import ConfigurationError, configure_logging, parse_config, settings
from app.harness import sweep, write_plotdata, write_results
from app.schemas import CsiMode, Scheme, SimConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ors-sim", description="RIS-assisted two-user downlink net-rate simulator.")
    commands = parser.add_subparsers(dest="command", required=True)
    run = commands.add_parser("run", help="sweep N over Monte Carlo drops and write the result table")
    run.add_argument("--config", required=True, help="flat 'key = value' experiment file")
    run.add_argument("--out", required=True, help="result CSV path")
    run.add_argument("--drops", type=int, help="drops per N (overrides the file)")
    run.add_argument("--seed", type=int, help="base seed (overrides the file)")
    run.add_argument("--schemes", help="comma-separated subset of " + ",".join(s.value for s in Scheme))
    run.add_argument("--csi", choices=[m.value for m in CsiMode], help="perfect or imperfect CSI")
    run.add_argument("--emit-plotdata", dest="plotdata", help="write N<TAB>mean<TAB>se blocks to this path")
    run.add_argument("--trace", help="directory for per-block iteration traces")
    return parser


def _apply_overrides(config: SimConfig, args: argparse.Namespace) -> SimConfig:
    overrides = {}
    if args.drops is not None:
        overrides["drops"] = args.drops
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.schemes is not None:
        overrides["schemes"] = [item.strip() for item in args.schemes.split(",") if item.strip()]
    if args.csi is not None:
        overrides["csi"] = args.csi
    if not overrides:
        return config
    try:
        return SimConfig(**{**config.model_dump(), **overrides})
    except ValidationError as e:
        raise ConfigurationError("; ".join(
            f"{err['loc'][0]}: {err['msg']}" if err["loc"] else err["msg"] for err in e.errors()))


def run(args: argparse.Namespace) -> int:
    try:
        config = _apply_overrides(parse_config(args.config), args)
    except ConfigurationError as e:
        logger.error("%s", e)
        return EXIT_CONFIG

    rows, _ = sweep(config, settings, trace_dir=args.trace or settings.trace_dir)
    write_results(rows, args.out)
    logger.info("Wrote %d result rows to %s", len(rows), args.out)
    if args.plotdata:
        write_plotdata(rows, args.plotdata)

    if rows and all(row.infeasible_count == row.drops for row in rows):
        logger.error("Every drop was infeasible")
        return EXIT_INFEASIBLE
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
