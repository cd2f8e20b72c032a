"""Command-line front end.

Exit codes: 0 success, 1 runtime or IO failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import warnings
from typing import Optional, Sequence

import numpy as np

from mcmc_gridbench.act import ActEstimate, ActOptions, Method, SeriesView, act_ics, estimate_act
from mcmc_gridbench.config import load_config
from mcmc_gridbench.errors import (
    ConfigError,
    EmptySelection,
    MissingTiming,
    ParseError,
    VersionError,
)
from mcmc_gridbench.harness import CellResult, default_workers, plan_cells, run_grid
from mcmc_gridbench.report import (
    FACTORS,
    ResultsTable,
    read_results,
    render_grid_svg,
    render_ratio_svg,
    write_results,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _err(msg: str) -> None:
    print(f"mcmc-gridbench: {msg}", file=sys.stderr)


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return format(float(v), ".6g")


def _cell_line(i: int, total: int, c: CellResult) -> str:
    beta = "" if c.beta is None else f" beta={c.beta:g}"
    return (f"[{i}/{total}] {c.distribution} {c.sampler} scale={c.scale:g}{beta} rep={c.replicate} "
            f"evals/iter={c.evals_per_iter:.3g} tau={_fmt(c.act_ar.tau)} fom={_fmt(c.fom)} "
            f"status={c.status.value} cpu={c.cpu_seconds:.2f}s")


def cmd_run(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_USAGE
    except OSError as exc:
        _err(str(exc))
        return EXIT_RUNTIME
    try:
        workers = args.threads if args.threads is not None else default_workers()
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_USAGE
    if workers < 1:
        _err("--threads must be at least 1")
        return EXIT_USAGE
    # fail early on an unwritable destination rather than after the grid runs
    try:
        with open(args.out, "a"):
            pass
    except OSError as exc:
        _err(f"cannot write results to {args.out}: {exc.strerror or exc}")
        return EXIT_RUNTIME

    done = 0
    total_box = []

    def progress(cell: CellResult) -> None:
        nonlocal done
        done += 1
        print(_cell_line(done, total_box[0] if total_box else 0, cell), file=sys.stderr, flush=True)

    try:
        total_box.append(len(plan_cells(config)))
        cells = run_grid(config, workers=workers, on_result=progress)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_USAGE
    try:
        write_results(ResultsTable.from_cells(cells), args.out)
    except OSError as exc:
        _err(str(exc))
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_plot(args) -> int:
    if args.style not in ("grid", "ratio"):
        _err(f"unknown style: {args.style}")
        return EXIT_USAGE
    for flag, name in (("--rows", args.rows), ("--cols", args.cols), ("--x", args.x)):
        if name not in FACTORS:
            _err(f"unknown factor for {flag}: {name}")
            return EXIT_USAGE
    try:
        table = read_results(args.results)
    except (ParseError, VersionError, OSError, UnicodeDecodeError) as exc:
        _err(str(exc))
        return EXIT_RUNTIME
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", EmptySelection)
            if args.style == "grid":
                render_grid_svg(table, args.rows, args.cols, args.x, args.out)
            else:
                render_ratio_svg(table, args.out)
        for w in caught:
            _err(f"warning: {w.message}")
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_USAGE
    except (MissingTiming, OSError) as exc:
        _err(str(exc))
        return EXIT_RUNTIME
    return EXIT_OK


def read_series(path) -> np.ndarray:
    """Single-column CSV of reals with an optional header ``x``."""
    values = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 1:
                raise ParseError(f"line {lineno}: expected a single column, found {len(row)}", lineno, None)
            text = row[0].strip()
            if lineno == 1 and text == "x":
                continue
            try:
                v = float(text)
            except ValueError:
                raise ParseError(f"line {lineno}: cannot parse {text!r} as a number", lineno, None) from None
            if not math.isfinite(v):
                raise ParseError(f"line {lineno}: value {text!r} is not finite", lineno, None)
            values.append(v)
    if not values:
        raise ParseError("input contains no values", None, None)
    return np.asarray(values)


def cmd_act(args) -> int:
    if not 0.0 < args.level < 1.0:
        _err("--level must lie in (0, 1)")
        return EXIT_USAGE
    try:
        x = read_series(args.input)
    except ParseError as exc:
        _err(str(exc))
        return EXIT_RUNTIME
    except (OSError, UnicodeDecodeError) as exc:
        _err(str(exc))
        return EXIT_RUNTIME
    series = SeriesView(x, known_mean=args.mean)
    ar = estimate_act(series, ActOptions(level=args.level, seed=args.seed))
    ics = act_ics(series) if series.n >= 4 else ActEstimate.degenerate(Method.ICS)
    for label, est in (("ar", ar), ("ics", ics)):
        print(f"{label}: {_fmt(est.tau)}, {_fmt(est.ci_low)}, {_fmt(est.ci_high)}, {est.order}, {est.status.value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mcmc-gridbench", description="Benchmark MCMC samplers by evaluations per independent draw.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run an experiment grid and write a results CSV")
    p.add_argument("--config", required=True, help="TOML config path, or the name of a bundled config")
    p.add_argument("--out", required=True, help="results CSV destination")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: $MCMC_GRIDBENCH_THREADS or the CPU count)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plot", help="render a results CSV as SVG")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--style", default="grid", help="grid or ratio")
    p.add_argument("--rows", default="distribution")
    p.add_argument("--cols", default="sampler")
    p.add_argument("--x", default="scale")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("act", help="estimate the autocorrelation time of one series")
    p.add_argument("--input", required=True, help="single-column CSV, optional header x")
    p.add_argument("--mean", type=float, default=None, help="known mean of the series")
    p.add_argument("--level", type=float, default=0.95, help="confidence level")
    p.add_argument("--seed", type=int, default=0, help="seed for the interval simulation")
    p.set_defaults(func=cmd_act)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
