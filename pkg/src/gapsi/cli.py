"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime error,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .config import ConfigError, load_config
from . import runner

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3

logger = logging.getLogger("gapsi")


def _common(parser: argparse.ArgumentParser, config_required: bool = True):
    parser.add_argument("--config", required=config_required, help="TOML experiment file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--trace", action=argparse.BooleanOptionalAction, default=None, help="write per-period CSV")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gapsi", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("simulate", help="run one configured episode"))
    _common(sub.add_parser("oracle", help="hindsight stationary and cyclic base-stock levels"))
    _common(sub.add_parser("bench", help="run every benchmark algorithm on the same demand"))

    p = sub.add_parser("check-derivs", help="finite-difference check of the one-sided Jacobians")
    _common(p, config_required=False)
    p.add_argument("--points", type=int, default=200, help="random points per system")
    p.add_argument("--tol", type=float, default=1e-6)

    rep = sub.add_parser("reproduce", help="desk-scale reproductions")
    rep_sub = rep.add_subparsers(dest="experiment", required=True)
    p = rep_sub.add_parser("poisson-table", help="learned vs optimal long-run loss on Poisson demand")
    _common(p, config_required=False)
    p.add_argument("--periods", type=int, default=10_000)
    p.add_argument("--tests", type=int, default=100)
    return parser


def _load(args):
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_overrides(seed=args.seed)
    return config


def _emit(payload, out: str | None, filename: str):
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / filename).write_text(text)


def _dispatch(args) -> int:
    if args.command == "simulate":
        config = _load(args)
        report = runner.run(config, args.out, args.trace)
        print(json.dumps(report.to_dict(timing=True), indent=2, sort_keys=True))
        return EXIT_OK
    if args.command == "oracle":
        _emit(asdict(runner.compute_oracles(_load(args))), args.out, "oracle.json")
        return EXIT_OK
    if args.command == "bench":
        reports = runner.bench(_load(args), args.out, args.trace, args.jobs)
        _emit([r.to_dict() for r in reports], args.out, "bench.json")
        return EXIT_OK
    if args.command == "check-derivs":
        systems = [_load(args).system()] if args.config else runner.default_check_systems()
        report = runner.check_derivatives(systems, args.points, args.seed or 0, args.tol)
        _emit(
            {"points": report.points, "checked": report.functions_checked, "mismatches": report.mismatches},
            args.out,
            "check_derivs.json",
        )
        return EXIT_OK if report.ok else EXIT_VERIFY
    if args.command == "reproduce":
        rows = runner.reproduce_poisson_table(args.periods, args.tests, args.seed or 0, args.jobs)
        _emit([{**asdict(r), "ok": r.ok} for r in rows], args.out, "poisson_table.json")
        for r in rows:
            status = "ok" if r.ok else "FAIL"
            print(f"{r.costs}: test loss {r.test_loss:.3f} (ref {r.reference}, opt {r.optimal}) {status}", file=sys.stderr)
        return EXIT_OK if all(r.ok for r in rows) else EXIT_VERIFY
    raise AssertionError(args.command)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad usage; report it as a configuration error
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _dispatch(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as err:
        print(f"config error: missing input file {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as err:  # noqa: BLE001 - report any failure as a runtime error
        logger.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
