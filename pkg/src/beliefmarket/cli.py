"""Command-line entry point: ``beliefmarket run | verify | batch``."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import ScenarioError
from .runner import EXIT_INVALID, EXIT_OK, Report, error_report, run
from .scenario import parse_scenario


def _execute(path: str) -> tuple[Report, int]:
    scenario = None
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        return error_report(ScenarioError(f"cannot read {path}: {exc}"))
    try:
        scenario = parse_scenario(text)
        return run(scenario), EXIT_OK
    except Exception as exc:  # rendered into the report with its exit code
        return error_report(exc, scenario)


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")


def _cmd_run(args) -> int:
    report, code = _execute(args.scenario)
    if not args.quiet:
        stream = sys.stdout if code == EXIT_OK else sys.stderr
        print("\n".join(report.human), file=stream)
    _write(args.out, report.to_json())
    if args.csv:
        if report.surface is None:
            if code == EXIT_OK:
                print("error: --csv needs a surface task", file=sys.stderr)
                return EXIT_INVALID
        else:
            _write(args.csv, report.surface.to_csv())
    return code


def _cmd_verify(args) -> int:
    from .verify import run_suite, suite_report

    results = run_suite(seed=args.seed, quick=args.quick, only=args.only)
    report = suite_report(results, seed=args.seed)
    print("\n".join(report.human))
    _write(args.out, report.to_json())
    return EXIT_OK if report.machine["passed"] else 1


def _batch_one(path: str) -> tuple[str, int, str]:
    report, code = _execute(path)
    return path, code, report.to_json()


def _cmd_batch(args) -> int:
    paths = sorted(str(p) for p in Path(args.directory).glob("*.json"))
    if not paths:
        print(f"error: no scenario files in {args.directory}", file=sys.stderr)
        return EXIT_INVALID
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_batch_one, paths))
    else:
        outcomes = [_batch_one(p) for p in paths]
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    worst = EXIT_OK
    for path, code, text in outcomes:
        print(f"{code}  {Path(path).name}")
        if out_dir:
            (out_dir / (Path(path).stem + ".report.json")).write_text(text, encoding="utf-8")
        worst = max(worst, code)
    return worst


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beliefmarket", description="Prediction-market demand, equilibrium and pooling.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario file")
    p.add_argument("scenario")
    p.add_argument("--out", help="write the machine report as JSON")
    p.add_argument("--csv", help="write the utility grid (surface task)")
    p.add_argument("--quiet", action="store_true", help="suppress the human-readable report")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true", help="one tenth of the random instances")
    p.add_argument("--only", type=int, nargs="+", metavar="N", help="run only these criteria")
    p.add_argument("--out", help="write the machine report as JSON")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("batch", help="run every *.json scenario in a directory")
    p.add_argument("directory")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", help="write one report per scenario here")
    p.set_defaults(func=_cmd_batch)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
