"""Command-line surface: ``run``, ``sweep``, ``report`` and ``serve``."""

import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from alpha_bandit.config import ConfigError, load_config, log_level_from_env
from alpha_bandit.harness import AlignmentError, collect_logs, emit_plotdata, run_seeds, sweep_grid
from alpha_bandit.ingest import EncodeError, ParseError
from alpha_bandit.version import __version__

logger = logging.getLogger("alpha-bandit.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

DATA_ERRORS = (ParseError, EncodeError, AlignmentError, OSError)


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alpha-bandit",
        description="LinUCB with online-learned exploration and a regret benchmark harness.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run the configured policy")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--seed", type=int, help="run this seed only (default: every configured seed)")
    run.add_argument("--out", type=Path, help="log directory (default: output_dir from the config)")
    run.add_argument("--jobs", type=_positive_int)

    sweep = commands.add_parser("sweep", help="sweep the alpha grid plus OPLINUCB and DOPLINUCB")
    sweep.add_argument("--config", required=True, type=Path)
    sweep.add_argument("--out", type=Path, help="output directory (default: output_dir from the config)")
    sweep.add_argument("--jobs", type=_positive_int)

    report = commands.add_parser("report", help="turn round logs into plot data")
    report.add_argument("logs", nargs="+", type=Path, help="log files or directories")
    report.add_argument("--out", required=True, type=Path)

    commands.add_parser("serve", help="start the MCP stdio server")
    return parser


def _run(args: argparse.Namespace) -> None:
    config = load_config(args.config)
    seeds: List[int] = config.seeds if args.seed is None else [args.seed]
    out_dir = args.out or config.output_dir
    for result in run_seeds(config, seeds, out_dir, args.jobs):
        print(f"{result.label}\tseed={result.seed}\trounds={result.rounds}\tfinal_regret={result.final_regret:g}")


def _sweep(args: argparse.Namespace) -> None:
    config = load_config(args.config)
    table = sweep_grid(config, args.out or config.output_dir, args.jobs)
    print(table.frame.to_string())


def _report(args: argparse.Namespace) -> None:
    for path in emit_plotdata(collect_logs(args.logs), args.out):
        print(path)


def _serve(args: argparse.Namespace) -> None:
    from alpha_bandit import server

    asyncio.run(server.main())


HANDLERS = {"run": _run, "sweep": _sweep, "report": _report, "serve": _serve}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=log_level_from_env(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        HANDLERS[args.command](args)
    except ConfigError as e:
        logger.error("Configuration error: %s", e, extra={"field": e.field})
        return EXIT_CONFIG
    except DATA_ERRORS as e:
        logger.error("Data error: %s", e)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
