"""Command-line front end.

    groupoidlab run --config <path> [--report <path>] [--suite <name>]...
    groupoidlab demo <family> --m <int> [--samples N] [--seed S] [--report <path>]
    groupoidlab dump-cycle --config <path> --points <json> --out <csv>

Exit status: 0 when every check passes, 1 on failed checks or invalid input,
2 when a Newton solve left its basin and aborted a suite.
"""
from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from importlib import metadata
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy

from .calabi import GeneratingReport, check_generating_function
from .config import RunConfig, load_config, parse_config
from .errors import ConfigError, GroupoidLabError, OutOfNeighborhood
from .fields import FAMILIES, FieldPair, gallery
from .report import SuiteReport, dumps
from .suites import SUITE_FUNCTIONS, SUITES, SuiteContext, run_suite

EXIT_OK, EXIT_FAILED, EXIT_ABORTED = 0, 1, 2

DEMO_PARAMS = {
    ("standard", 1): [],
    ("graph", 1): [0.0, 0.1, 0.0, 0.05],
    ("graph", 2): [0.05, 0.1, -0.05, 0.05, 0.03, 0.02],
    ("mixed", 1): [0.0, 0.1],
    ("mixed", 2): [0.05, 0.1, 0.03],
}


def _version() -> str:
    try:
        return metadata.version("groupoidlab")
    except metadata.PackageNotFoundError:
        from . import __version__
        return __version__


def versions() -> dict[str, str]:
    return {"groupoidlab": _version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def build_pair(config: RunConfig) -> FieldPair:
    """Gallery pair for ``config``; malformed parameters become ConfigError."""
    try:
        return gallery(config.family, config.family_params, config.m, config.box_radius,
                       config.fiber_radius)
    except GroupoidLabError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def exit_status(reports: Sequence[SuiteReport]) -> int:
    if any(r.aborted for r in reports):
        return EXIT_ABORTED
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAILED


def run(config: RunConfig,
        suite_functions: Mapping[str, Callable] | None = None) -> tuple[list[SuiteReport], int]:
    """Run the configured suites in order and return their reports with the exit status."""
    pair = build_pair(config)
    ctx = SuiteContext(pair, config.numeric_tolerances(), config.samples, config.seed,
                       tuple(config.n_cycle_sizes))
    funcs = SUITE_FUNCTIONS if suite_functions is None else suite_functions
    echo = config.model_dump(mode="json")
    reports = []
    for name in config.suites:
        start = time.perf_counter()
        report = run_suite(name, ctx, funcs[name])
        report.meta = {"config": echo, "versions": versions(),
                       "wall_time_s": time.perf_counter() - start}
        reports.append(report)
    return reports, exit_status(reports)


def demo_config(family: str, m: int, samples: int = 5, seed: int = 0) -> RunConfig:
    params = DEMO_PARAMS.get((family, m), DEMO_PARAMS.get((family, 2), []))
    return parse_config({"family": family, "family_params": params, "m": m, "samples": samples,
                         "seed": seed, "n_cycle_sizes": [2, 3]})


def cycle_header(m: int) -> list[str]:
    d = 2 * m
    return (["k"] + [f"x_{i}" for i in range(1, d + 1)] + [f"xi_{i}" for i in range(1, d + 1)]
            + ["res_source", "res_target"])


def dump_cycle(config: RunConfig, xs, out_path) -> GeneratingReport:
    """Verify the cycle generated at ``xs`` (n, 2m) and write it as CSV."""
    pair = build_pair(config)
    xs = np.asarray(xs, float)
    if xs.ndim != 2 or xs.shape[1] != 2 * pair.m or xs.shape[0] < 2:
        raise ConfigError(f"points must be an n x {2 * pair.m} array with n >= 2")
    ctx = SuiteContext(pair, config.numeric_tolerances(), 1, config.seed)
    report = check_generating_function(ctx.gs, ctx.gauge, ctx.groupoid, xs)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cycle_header(pair.m))
        for k in range(xs.shape[0]):
            row = [*xs[k], *report.xi[k], report.source[k], report.target[k]]
            writer.writerow([k + 1] + [f"{float(v):.17g}" for v in row])
    return report


def _write(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text + "\n")
    else:
        Path(path).write_text(text + "\n")


def _summary(reports: Sequence[SuiteReport]) -> None:
    for r in reports:
        state = "ABORTED" if r.aborted else ("PASS" if r.passed else "FAIL")
        print(f"[{state}] {r.suite}", file=sys.stderr)
        if r.aborted:
            print(f"    {r.aborted}", file=sys.stderr)
        for c in r.checks:
            if not c.passed:
                print(f"    {c.name}: {c.max_residual:.3e} > {c.tolerance:.1e}", file=sys.stderr)


def _run_and_report(config: RunConfig, report_path: str | None) -> int:
    reports, status = run(config)
    _summary(reports)
    _write(dumps([r.to_dict() for r in reports]), report_path)
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groupoidlab",
                                     description="Verify local symplectic groupoids of Lagrangian field pairs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the suites named in a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--report", help="write the JSON report here instead of stdout")
    p.add_argument("--suite", action="append", choices=SUITES, dest="suites",
                   help="restrict to this suite (repeatable)")

    p = sub.add_parser("demo", help="run a built-in configuration")
    p.add_argument("family", choices=FAMILIES)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--samples", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report")

    p = sub.add_parser("dump-cycle", help="write a verified generating-function cycle as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--points", required=True, help="JSON file holding a list of n points")
    p.add_argument("--out", required=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = load_config(args.config)
            if args.suites:
                config = parse_config({**config.model_dump(), "suites": args.suites})
            return _run_and_report(config, args.report)
        if args.command == "demo":
            return _run_and_report(demo_config(args.family, args.m, args.samples, args.seed), args.report)
        config = load_config(args.config)
        try:
            points = json.loads(Path(args.points).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read points from {args.points}: {exc}") from exc
        report = dump_cycle(config, points, args.out)
        tol = config.numeric_tolerances().check_tol
        if report.failure:
            print(report.failure, file=sys.stderr)
        return EXIT_OK if report.passed(tol) else EXIT_FAILED
    except OutOfNeighborhood as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    except (GroupoidLabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
