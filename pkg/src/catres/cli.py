"""``catres`` command-line entry point.

Exit codes: 0 success, 2 configuration or validation failure, 3 numerical
tolerance failure.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import logging
import sys
import time
import warnings

from .config import EXPERIMENTS, ExperimentConfig
from .errors import (
    ConfigurationError,
    ContractError,
    IntegrationError,
    NumericalToleranceError,
    ShapeError,
    TruncationError,
)
from .experiments import run, worker_count

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

log = logging.getLogger("catres")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="catres", description="Two-phonon optomechanics and mechanical cat-state experiments.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", metavar="PATH", help="JSON config (defaults are used when omitted)")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config leaf by dotted path; VALUE is parsed as JSON when possible")
    ap.add_argument("--out", required=True, metavar="DIR", help="output directory")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    try:
        cfg = ExperimentConfig.load(args.config, args.overrides, args.experiment)
        log.info("config hash %s", cfg.hash)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore" if not args.verbose else "default")
            art = run(cfg, args.out)
    except (ConfigurationError, TruncationError, ShapeError) as exc:
        print(f"catres: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, NumericalToleranceError, ContractError) as exc:
        print(f"catres: numerical tolerance failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    art.wall_time = time.perf_counter() - t0
    art.write(args.out)
    threads = worker_count(cfg.section("sweep")["workers"], 1 << 30) if cfg.experiment == "sweep" else 1
    art.write_run_info(args.out, started, threads)
    for name, ok in sorted(art.checks.items()):
        log.info("check %-45s %s", name, "ok" if ok else "NOT MET")
    if art.tolerance_failures:
        for f in art.tolerance_failures:
            print(f"catres: tolerance failure: {f}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"catres: {cfg.experiment} done in {art.wall_time:.1f} s, outputs in {args.out} (config {cfg.hash})")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
