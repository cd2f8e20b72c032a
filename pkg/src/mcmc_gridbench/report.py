"""Results CSV persistence and SVG small-multiples plots.

The CSV schema (version 1) has one row per simulation::

    distribution,dim,sampler,scale,beta,replicate,seed,chain_length,
    burn_in_fraction,evals_per_iter,grad_evals_per_iter,cpu_seconds,
    wall_seconds,tau_ar,tau_ar_lo,tau_ar_hi,order,tau_ics,status,fom,fom_lo,fom_hi

Reals are written with 17 significant digits, infinities as ``inf`` and
not-applicable values as empty fields. SVG output is a pure function of the
table and the factor choices: no timestamps and fixed-precision coordinates.
"""

from __future__ import annotations

import csv
import io
import math
import os
import statistics
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence
from xml.sax.saxutils import escape

from mcmc_gridbench.errors import ConfigError, EmptySelection, MissingTiming, ParseError, VersionError

SCHEMA_VERSION = 1
COLUMNS = (
    "distribution", "dim", "sampler", "scale", "beta", "replicate", "seed",
    "chain_length", "burn_in_fraction", "evals_per_iter", "grad_evals_per_iter",
    "cpu_seconds", "wall_seconds", "tau_ar", "tau_ar_lo", "tau_ar_hi", "order",
    "tau_ics", "status", "fom", "fom_lo", "fom_hi",
)
_INT_COLUMNS = {"dim", "replicate", "seed", "chain_length", "order"}
_STR_COLUMNS = {"distribution", "sampler", "status"}
_STATUSES = {"ok", "degenerate", "nonstationary"}
# columns that every row must carry
_REQUIRED = {"distribution", "dim", "sampler", "scale", "replicate", "seed", "chain_length",
             "burn_in_fraction", "evals_per_iter", "status"}
TIMING_COLUMNS = ("cpu_seconds", "wall_seconds")

FACTORS = ("distribution", "dim", "sampler", "scale", "beta")
NUMERIC_FACTORS = ("dim", "scale", "beta")

_SAMPLER_LABELS = {
    "adaptive_metropolis": "Adaptive Metropolis",
    "univariate_metropolis": "Univariate Metropolis",
    "shrinking_rank": "Shrinking Rank",
    "step_out_slice": "Step-out Slice",
}
_DISTRIBUTION_LABELS = {
    "gamma21": "Gamma(2,1)",
    "gaussian4": "N4(rho=0.999)",
    "eight_schools": "Eight Schools",
    "mixture_ten": "Mixture Ten",
    "scaled_gaussian": "Scaled Gaussian",
}


@dataclass
class ResultsTable:
    rows: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def __len__(self):
        return len(self.rows)

    @classmethod
    def from_cells(cls, cells: Iterable) -> "ResultsTable":
        return cls([cell_to_row(c) for c in cells])


def _opt_float(v) -> Optional[float]:
    if v is None:
        return None
    v = float(v)
    return None if math.isnan(v) else v


def cell_to_row(cell) -> dict:
    """Flatten a :class:`~mcmc_gridbench.harness.CellResult` to CSV scalars."""
    ar = cell.act_ar
    ics = cell.act_ics
    status = cell.status.value
    degenerate = status == "degenerate"
    return {
        "distribution": cell.distribution,
        "dim": cell.dim,
        "sampler": cell.sampler,
        "scale": float(cell.scale),
        "beta": _opt_float(cell.beta),
        "replicate": cell.replicate,
        "seed": cell.seed,
        "chain_length": cell.chain_length,
        "burn_in_fraction": float(cell.burn_in_fraction),
        "evals_per_iter": float(cell.evals_per_iter),
        "grad_evals_per_iter": float(cell.grad_evals_per_iter),
        "cpu_seconds": _opt_float(cell.cpu_seconds),
        "wall_seconds": _opt_float(cell.wall_seconds),
        "tau_ar": None if degenerate else _opt_float(ar.tau),
        "tau_ar_lo": None if degenerate else _opt_float(ar.ci_low),
        "tau_ar_hi": None if degenerate else _opt_float(ar.ci_high),
        "order": None if degenerate else ar.order,
        "tau_ics": _opt_float(ics.tau) if ics.status.value == "ok" and not degenerate else None,
        "status": status,
        "fom": None if degenerate else _opt_float(cell.fom),
        "fom_lo": None if degenerate else _opt_float(cell.fom_lo),
        "fom_hi": None if degenerate else _opt_float(cell.fom_hi),
    }


def _encode(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool,)):
        raise TypeError("booleans are not part of the schema")
    if isinstance(value, int):
        return str(value)
    v = float(value)
    if math.isnan(v):
        return ""
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def format_results(table: ResultsTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in table.rows:
        writer.writerow([_encode(row.get(c)) for c in COLUMNS])
    return buf.getvalue()


def write_results(table: ResultsTable, destination) -> None:
    text = format_results(table)
    try:
        with open(destination, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {os.fspath(destination)}: {exc.strerror or exc}") from exc


def _decode(text: str, column: str, line: int):
    if text == "":
        if column in _REQUIRED:
            raise ParseError(f"line {line}: column {column} is empty", line, column)
        return None
    if column in _STR_COLUMNS:
        if column == "status" and text not in _STATUSES:
            raise ParseError(f"line {line}: column status has unknown value {text!r}", line, column)
        return text
    try:
        if column in _INT_COLUMNS:
            return int(text)
        return float(text)
    except ValueError:
        raise ParseError(f"line {line}: column {column}: cannot parse {text!r}", line, column) from None


def parse_results(text: str) -> ResultsTable:
    lines = text.splitlines()
    offset = 0
    if lines and lines[0].startswith("#"):
        tag = lines[0].lstrip("#").strip()
        if tag.startswith("schema:"):
            version = tag.split(":", 1)[1].strip()
            if version != str(SCHEMA_VERSION):
                raise VersionError(f"results schema version {version} is not supported (expected {SCHEMA_VERSION})")
        offset = 1
    reader = csv.reader(lines[offset:])
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("results file is empty", 1, None) from None
    header_line = offset + 1
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise ParseError(f"line {header_line}: missing header column {missing[0]}", header_line, missing[0])
    extra = [c for c in header if c not in COLUMNS]
    if extra:
        raise VersionError(f"line {header_line}: unexpected column {extra[0]}; not a version {SCHEMA_VERSION} results file")
    rows = []
    for i, fields in enumerate(reader):
        line = header_line + 1 + i
        if not fields:
            continue
        if len(fields) != len(header):
            raise ParseError(f"line {line}: expected {len(header)} fields, found {len(fields)}", line, None)
        rows.append({name: _decode(v, name, line) for name, v in zip(header, fields)})
    return ResultsTable(rows)


def read_results(source) -> ResultsTable:
    with open(source, newline="") as fh:
        return parse_results(fh.read())


# ---------------------------------------------------------------------------
# figures


@dataclass
class Panel:
    """Marks for one grid cell, in (log10 x, log10 y) data units."""

    dots: list = field(default_factory=list)  # (x, y)
    segments: list = field(default_factory=list)  # (x, y_lo, y_hi or None for open top)
    crosses: list = field(default_factory=list)  # (x, y)
    questions: list = field(default_factory=list)  # x
    arrows: list = field(default_factory=list)  # x
    empty: bool = False


@dataclass
class GridFigure:
    row_factor: str
    col_factor: str
    x_factor: str
    row_levels: list
    col_levels: list
    row_labels: list
    col_labels: list
    panels: dict
    x_range: tuple
    y_range: tuple
    x_label: str
    y_label: str
    reference_y: Optional[float] = None
    opacity: float = 1.0
    caption: str = ""

    @property
    def cell_count(self) -> int:
        return len(self.row_levels) * len(self.col_levels)


def _level_label(factor: str, value) -> str:
    if factor == "distribution":
        return _DISTRIBUTION_LABELS.get(value, str(value))
    if factor == "sampler":
        return _SAMPLER_LABELS.get(value, str(value))
    if factor == "beta":
        return f"beta = {_num(value)}"
    if factor == "dim":
        return f"dim = {value}"
    return f"{factor} = {_num(value)}"


def _num(v) -> str:
    if v is None:
        return "n/a"
    return format(float(v), "g")


def _check_factors(rows: str, cols: str, x: str) -> None:
    for name in (rows, cols, x):
        if name not in FACTORS:
            raise ConfigError(f"unknown factor: {name}")
    if x not in NUMERIC_FACTORS:
        raise ConfigError(f"x factor must be numeric ({', '.join(NUMERIC_FACTORS)}), got {x}")
    if len({rows, cols, x}) != 3:
        raise ConfigError("row, column and x factors must be distinct")


def _levels(table: ResultsTable, factor: str) -> list:
    seen = []
    for r in table.rows:
        v = r.get(factor)
        if v not in seen:
            seen.append(v)
    return seen


def _log10(v) -> Optional[float]:
    if v is None or not v > 0 or math.isinf(v):
        return None
    return math.log10(v)


def _decade_range(values: Sequence[float], default=(0.0, 1.0)) -> tuple:
    if not values:
        return default
    lo = math.floor(min(values))
    hi = math.ceil(max(values))
    if hi <= lo:
        hi = lo + 1
    return float(lo), float(hi)


def _x_range(xs: Sequence[float]) -> tuple:
    if not xs:
        return (0.0, 1.0)
    lo, hi = min(xs), max(xs)
    pad = 0.08 * (hi - lo) if hi > lo else 0.5
    return lo - pad, hi + pad


def build_grid_figure(table: ResultsTable, row_factor: str, col_factor: str, x_factor: str) -> GridFigure:
    """Lay out the figure-of-merit plot: dots, CI segments, ICS crosses, ``?`` and arrows."""
    _check_factors(row_factor, col_factor, x_factor)
    if not table.rows:
        raise ConfigError("results table is empty")
    row_levels = _levels(table, row_factor)
    col_levels = _levels(table, col_factor)
    panels = {(i, j): Panel() for i in range(len(row_levels)) for j in range(len(col_levels))}

    xs, ys = [], []
    per_x: dict = {}
    for r in table.rows:
        lx = _log10(r.get(x_factor))
        if lx is None:
            continue
        key = (r.get(row_factor), r.get(col_factor), lx)
        per_x[key] = per_x.get(key, 0) + 1
        xs.append(lx)
        ics = _ics_fom(r)
        for v in (r.get("fom"), r.get("fom_lo"), r.get("fom_hi"), ics):
            lv = _log10(v)
            if lv is not None:
                ys.append(lv)
    y_range = _decade_range(ys)
    x_range = _x_range(xs)

    for r in table.rows:
        lx = _log10(r.get(x_factor))
        if lx is None:
            continue
        p = panels[(row_levels.index(r.get(row_factor)), col_levels.index(r.get(col_factor)))]
        ics = _log10(_ics_fom(r))
        if ics is not None:
            p.crosses.append((lx, ics))
        if r.get("status") == "degenerate":
            p.questions.append(lx)
            continue
        fom = r.get("fom")
        if fom is not None and math.isinf(fom):
            p.arrows.append(lx)
        else:
            y = _log10(fom)
            if y is not None:
                p.dots.append((lx, y))
                lo = _log10(r.get("fom_lo"))
                hi = r.get("fom_hi")
                if lo is not None:
                    if hi is not None and math.isinf(hi):
                        p.segments.append((lx, lo, None))
                    elif _log10(hi) is not None:
                        p.segments.append((lx, lo, _log10(hi)))

    for (i, j), p in panels.items():
        if not (p.dots or p.arrows or p.questions or p.crosses):
            p.empty = True
            warnings.warn(
                f"no rows for {row_factor}={row_levels[i]!r}, {col_factor}={col_levels[j]!r}",
                EmptySelection,
                stacklevel=2,
            )

    return GridFigure(
        row_factor=row_factor,
        col_factor=col_factor,
        x_factor=x_factor,
        row_levels=row_levels,
        col_levels=col_levels,
        row_labels=[_level_label(row_factor, v) for v in row_levels],
        col_labels=[_level_label(col_factor, v) for v in col_levels],
        panels=panels,
        x_range=x_range,
        y_range=y_range,
        x_label=x_factor,
        y_label="log-density evaluations per independent observation",
        opacity=0.5 if any(n > 1 for n in per_x.values()) else 1.0,
    )


def _ics_fom(row: dict) -> Optional[float]:
    tau = row.get("tau_ics")
    e = row.get("evals_per_iter")
    if tau is None or e is None:
        return None
    return e * tau


def cost_per_eval(row: dict) -> float:
    """Post-burn-in processor seconds per log-density evaluation."""
    cpu = row.get("cpu_seconds")
    if cpu is None:
        raise MissingTiming(f"row for {row.get('distribution')}/{row.get('sampler')} has no cpu_seconds")
    n = row["chain_length"] - math.floor(row["burn_in_fraction"] * row["chain_length"])
    return cpu / (row["evals_per_iter"] * n)


def normalized_ratios(table: ResultsTable) -> list[float]:
    """Cost per evaluation divided by its median over the same distribution."""
    costs = [cost_per_eval(r) for r in table.rows]
    medians = {}
    for name in _levels(table, "distribution"):
        medians[name] = statistics.median(c for c, r in zip(costs, table.rows) if r["distribution"] == name)
    return [c / medians[r["distribution"]] if medians[r["distribution"]] > 0 else math.nan
            for c, r in zip(costs, table.rows)]


def build_ratio_figure(table: ResultsTable) -> GridFigure:
    if not table.rows:
        raise ConfigError("results table is empty")
    ratios = normalized_ratios(table)
    row_levels = _levels(table, "distribution")
    col_levels = _levels(table, "sampler")
    panels = {(i, j): Panel() for i in range(len(row_levels)) for j in range(len(col_levels))}
    xs, ys = [], [0.0]
    for r, q in zip(table.rows, ratios):
        lx = _log10(r.get("scale"))
        ly = _log10(q)
        if lx is None or ly is None:
            continue
        xs.append(lx)
        ys.append(ly)
        panels[(row_levels.index(r["distribution"]), col_levels.index(r["sampler"]))].dots.append((lx, ly))
    span = max(1.0, max(abs(v) for v in ys))
    y_range = (-float(math.ceil(span)), float(math.ceil(span)))
    for p in panels.values():
        p.empty = not p.dots
    return GridFigure(
        row_factor="distribution",
        col_factor="sampler",
        x_factor="scale",
        row_levels=row_levels,
        col_levels=col_levels,
        row_labels=[_level_label("distribution", v) for v in row_levels],
        col_labels=[_level_label("sampler", v) for v in col_levels],
        panels=panels,
        x_range=_x_range(xs),
        y_range=y_range,
        x_label="scale",
        y_label="processor time per evaluation / median",
        reference_y=0.0,
    )


# ---------------------------------------------------------------------------
# SVG

PANEL_W = 170.0
PANEL_H = 130.0
GAP = 14.0
MARGIN_LEFT = 120.0
MARGIN_TOP = 46.0
MARGIN_RIGHT = 16.0
MARGIN_BOTTOM = 56.0


def _f(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _tick_label(decade: float) -> str:
    k = int(round(decade))
    return f"1e{k}"


class _Frame:
    def __init__(self, fig: GridFigure, i: int, j: int):
        self.left = MARGIN_LEFT + j * (PANEL_W + GAP)
        self.top = MARGIN_TOP + i * (PANEL_H + GAP)
        self.x0, self.x1 = fig.x_range
        self.y0, self.y1 = fig.y_range

    def px(self, x: float) -> float:
        return self.left + (x - self.x0) / (self.x1 - self.x0) * PANEL_W

    def py(self, y: float) -> float:
        y = min(max(y, self.y0), self.y1)
        return self.top + PANEL_H - (y - self.y0) / (self.y1 - self.y0) * PANEL_H


def render_svg(fig: GridFigure) -> str:
    nrows, ncols = len(fig.row_levels), len(fig.col_levels)
    width = MARGIN_LEFT + ncols * PANEL_W + (ncols - 1) * GAP + MARGIN_RIGHT
    height = MARGIN_TOP + nrows * PANEL_H + (nrows - 1) * GAP + MARGIN_BOTTOM
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_f(width)}" height="{_f(height)}" '
        f'viewBox="0 0 {_f(width)} {_f(height)}" font-family="Helvetica, Arial, sans-serif" font-size="10">',
        "<style>.frame{fill:none;stroke:#000;stroke-width:0.8}.grid{stroke:#ddd;stroke-width:0.5}"
        ".ci{stroke:#000;stroke-width:1}.ics{stroke:#000;stroke-width:1;fill:none}"
        ".fom{fill:#000}.inf{fill:#000}.ref{stroke:#000;stroke-width:0.8;stroke-dasharray:4 3}"
        ".degenerate{font-size:12px;font-weight:bold}</style>",
    ]
    for j, label in enumerate(fig.col_labels):
        cx = MARGIN_LEFT + j * (PANEL_W + GAP) + PANEL_W / 2
        out.append(f'<text class="col-label" x="{_f(cx)}" y="{_f(MARGIN_TOP - 12)}" text-anchor="middle">{escape(label)}</text>')
    for i, label in enumerate(fig.row_labels):
        cy = MARGIN_TOP + i * (PANEL_H + GAP) + PANEL_H / 2
        out.append(f'<text class="row-label" x="{_f(8)}" y="{_f(cy)}" text-anchor="start">{escape(label)}</text>')

    y_decades = range(int(math.ceil(fig.y_range[0])), int(math.floor(fig.y_range[1])) + 1)
    x_decades = range(int(math.ceil(fig.x_range[0])), int(math.floor(fig.x_range[1])) + 1)
    for i in range(nrows):
        for j in range(ncols):
            fr = _Frame(fig, i, j)
            p = fig.panels[(i, j)]
            out.append(f'<g class="panel" data-row="{i}" data-col="{j}">')
            for d in y_decades:
                y = fr.py(d)
                out.append(f'<line class="grid" x1="{_f(fr.left)}" y1="{_f(y)}" x2="{_f(fr.left + PANEL_W)}" y2="{_f(y)}"/>')
                if j == 0:
                    out.append(f'<text class="tick" x="{_f(fr.left - 4)}" y="{_f(y + 3)}" text-anchor="end">{_tick_label(d)}</text>')
            for d in x_decades:
                x = fr.px(d)
                out.append(f'<line class="grid" x1="{_f(x)}" y1="{_f(fr.top)}" x2="{_f(x)}" y2="{_f(fr.top + PANEL_H)}"/>')
                if i == nrows - 1:
                    out.append(f'<text class="tick" x="{_f(x)}" y="{_f(fr.top + PANEL_H + 12)}" text-anchor="middle">{_tick_label(d)}</text>')
            out.append(f'<rect class="frame" x="{_f(fr.left)}" y="{_f(fr.top)}" width="{_f(PANEL_W)}" height="{_f(PANEL_H)}"/>')
            if fig.reference_y is not None:
                y = fr.py(fig.reference_y)
                out.append(f'<line class="ref" x1="{_f(fr.left)}" y1="{_f(y)}" x2="{_f(fr.left + PANEL_W)}" y2="{_f(y)}"/>')
            out.extend(_panel_marks(fr, p, fig.opacity))
            out.append("</g>")

    bottom = MARGIN_TOP + nrows * PANEL_H + (nrows - 1) * GAP
    out.append(f'<text class="axis-title" x="{_f(MARGIN_LEFT + (width - MARGIN_LEFT) / 2)}" y="{_f(bottom + 34)}" '
               f'text-anchor="middle">{escape(fig.x_label)} (log scale)</text>')
    mid = MARGIN_TOP + (bottom - MARGIN_TOP) / 2
    out.append(f'<text class="axis-title" x="{_f(MARGIN_LEFT - 44)}" y="{_f(mid)}" text-anchor="middle" '
               f'transform="rotate(-90 {_f(MARGIN_LEFT - 44)} {_f(mid)})">{escape(fig.y_label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _panel_marks(fr: _Frame, p: Panel, opacity: float) -> list[str]:
    op = "" if opacity >= 1.0 else f' opacity="{_f(opacity)}"'
    out = []
    top = fr.top
    for x, lo, hi in p.segments:
        px = fr.px(x)
        y_hi = top + 6 if hi is None else fr.py(hi)
        out.append(f'<line class="ci" x1="{_f(px)}" y1="{_f(fr.py(lo))}" x2="{_f(px)}" y2="{_f(y_hi)}"{op}/>')
        if hi is None:
            out.append(_arrow(px, top))
    for x, y in p.dots:
        out.append(f'<circle class="fom" cx="{_f(fr.px(x))}" cy="{_f(fr.py(y))}" r="2.5"{op}/>')
    for x, y in p.crosses:
        px, py = fr.px(x), fr.py(y)
        out.append(f'<path class="ics" d="M{_f(px - 3)} {_f(py - 3)}L{_f(px + 3)} {_f(py + 3)}'
                   f'M{_f(px - 3)} {_f(py + 3)}L{_f(px + 3)} {_f(py - 3)}"{op}/>')
    for x in p.arrows:
        px = fr.px(x)
        out.append(f'<line class="ci" x1="{_f(px)}" y1="{_f(top + 18)}" x2="{_f(px)}" y2="{_f(top + 6)}"/>')
        out.append(_arrow(px, top))
    for x in p.questions:
        out.append(f'<text class="degenerate" x="{_f(fr.px(x))}" y="{_f(top + PANEL_H - 6)}" text-anchor="middle">?</text>')
    return out


def _arrow(px: float, top: float) -> str:
    return (f'<path class="inf" d="M{_f(px)} {_f(top + 1)}L{_f(px - 3)} {_f(top + 7)}'
            f'L{_f(px + 3)} {_f(top + 7)}Z"/>')


def _write_text(text: str, destination) -> None:
    try:
        with open(destination, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {os.fspath(destination)}: {exc.strerror or exc}") from exc


def render_grid_svg(table: ResultsTable, row_factor: str, col_factor: str, x_factor: str, destination) -> None:
    _write_text(render_svg(build_grid_figure(table, row_factor, col_factor, x_factor)), destination)


def render_ratio_svg(table: ResultsTable, destination) -> None:
    _write_text(render_svg(build_ratio_figure(table)), destination)
