"""Command line entry point.

Exit codes:

    0  success
    1  runtime error
    2  usage error
    3  invalid scenario (unreadable, malformed or failing validation)
    4  infeasible: some broker missed its deadline or budget
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

from .broker import MODES
from .scenario import ScenarioError, build_world, comparison_table, load_scenario, report, run

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_INVALID = 3
EXIT_INFEASIBLE = 4

TRACE_ENV = "GRIDECON_TRACE_DIR"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridecon", description="Economy-driven grid scheduling simulator.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one or more scenarios")
    r.add_argument("scenario", nargs="+", help="scenario file, or a bundled name such as 'wwg'")
    r.add_argument("--seed", type=int, help="override the scenario seed")
    r.add_argument("--mode", choices=[*MODES, "both"], help="override every broker's optimisation mode")
    r.add_argument("--trace", metavar="DIR", help=f"write traces and summaries here (default ${TRACE_ENV})")
    r.add_argument("--format", choices=["table", "json", "csv"], default="table")
    r.add_argument("--jobs", type=int, default=1, metavar="N", help="run up to N scenarios in parallel")
    v = sub.add_parser("validate", help="check a scenario without running it")
    v.add_argument("scenario")
    d = sub.add_parser("dump-directory", help="print the market directory at t=0 as JSON")
    d.add_argument("scenario")
    return p


def _run_one(path: str, seed: Optional[int], mode: Optional[str], trace: Optional[str], fmt: str,
             tag: Optional[str]) -> tuple[int, str]:
    try:
        scenario = load_scenario(path)
    except ScenarioError as exc:
        return EXIT_INVALID, "".join(f"{p}: {m}\n" for p, m in exc.problems)
    try:
        if mode == "both":
            out = {}
            for m in MODES:
                tdir = None if trace is None else Path(trace, *(filter(None, [tag, m])))
                out[m] = run(scenario, seed, m, tdir)
            if fmt == "table":
                text = comparison_table(out)
            elif fmt == "json":
                text = json.dumps({m: s.to_dict() for m, s in out.items()}, indent=2, sort_keys=True) + "\n"
            else:
                text = "".join(report(s, "csv") for s in out.values())
            feasible = all(s.feasible for s in out.values())
        else:
            tdir = None if trace is None else (Path(trace, tag) if tag else Path(trace))
            summary = run(scenario, seed, mode, tdir)
            text = report(summary, fmt)
            feasible = summary.feasible
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        return EXIT_RUNTIME, f"error: {exc}\n"
    return (EXIT_OK if feasible else EXIT_INFEASIBLE), text


def _cmd_run(args) -> int:
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    trace = args.trace or os.environ.get(TRACE_ENV) or None
    many = len(args.scenario) > 1
    jobs = [(path, args.seed, args.mode, trace, args.format, f"{i:02d}-{Path(path).stem}" if many else None)
            for i, path in enumerate(args.scenario)]
    if args.jobs > 1 and many:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, *zip(*jobs)))
    else:
        results = [_run_one(*j) for j in jobs]
    for rc, text in results:
        (sys.stdout if rc in (EXIT_OK, EXIT_INFEASIBLE) else sys.stderr).write(text)
    codes = {rc for rc, _ in results}
    # worst outcome wins
    return next((c for c in (EXIT_RUNTIME, EXIT_INVALID, EXIT_INFEASIBLE) if c in codes), EXIT_OK)


def _cmd_validate(args) -> int:
    try:
        s = load_scenario(args.scenario)
    except ScenarioError as exc:
        for p, m in exc.problems:
            print(f"{p}: {m}", file=sys.stderr)
        return EXIT_INVALID
    print(f"ok: {s.name}: {len(s.providers)} providers, {len(s.brokers)} brokers, "
          f"{len(s.data_sites)} data sites")
    return EXIT_OK


def _cmd_dump(args) -> int:
    try:
        s = load_scenario(args.scenario)
    except ScenarioError as exc:
        for p, m in exc.problems:
            print(f"{p}: {m}", file=sys.stderr)
        return EXIT_INVALID
    world = build_world(s)
    print(json.dumps(world.grid.directory.dump(0), indent=2, sort_keys=True))
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    handler = {"run": _cmd_run, "validate": _cmd_validate, "dump-directory": _cmd_dump}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
