"""Command line driver: ``dgieti solve|kappa-study|ratio-study|convergence``.

Every run writes ``results.csv`` and ``report.json`` to the output
directory. Exit codes: 0 success, 1 error, 2 PCG did not converge.
"""

import argparse
import logging
import os
import sys
import time
from typing import List, Optional

from . import __version__
from .config import EXPERIMENTS, RunConfig, load_config
from .exceptions import DgIetiError, ExperimentError
from .experiments import EXPERIMENT_COLUMNS, ExperimentRunner
from .utils import ensure_dir, write_csv, write_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dgieti", description="dG-IETI-DP solver for multipatch IgA diffusion problems")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=EXPERIMENTS, help="experiment to run")
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", help="output directory (overrides the configuration)")
    parser.add_argument("--oracle", action="store_true", default=None, help="also compute dense spectra")
    parser.add_argument("--delta", type=float, help="penalty parameter")
    parser.add_argument("--tol", type=float, help="PCG relative tolerance")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    return parser


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config)
    return config.replace(experiment=args.command, output=args.out, oracle=args.oracle, delta=args.delta, tol=args.tol)


def write_outputs(out: str, columns: List[str], rows, report) -> None:
    ensure_dir(out)
    write_csv(os.path.join(out, "results.csv"), columns, rows)
    write_json(os.path.join(out, "report.json"), report)


def run(args: argparse.Namespace, runner_cls=None) -> int:
    config = resolve_config(args)
    runner_cls = runner_cls or ExperimentRunner
    report = {"version": __version__, "command": args.command, "config": config.to_dict()}
    start = time.perf_counter()
    runner = runner_cls(config)
    try:
        columns, rows, summary = runner.run()
    except ExperimentError as e:
        logger.error("%s", e)
        report.update(status="error", error=str(e), rows=e.partial, elapsed=time.perf_counter() - start)
        write_outputs(config.output, EXPERIMENT_COLUMNS[config.experiment], e.partial, report)
        return EXIT_ERROR
    report.update(rows=rows, summary=summary, elapsed=time.perf_counter() - start)
    converged = summary.get("converged", True)
    report["status"] = "ok" if converged else "not-converged"
    write_outputs(config.output, columns, rows, report)
    logger.info("wrote %s", os.path.join(config.output, "results.csv"))
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return run(args)
    except DgIetiError as e:
        logger.error("%s", e)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
