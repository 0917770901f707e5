"""Figure data from metrics tables: long CSVs per figure and optional SVG line charts."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .metrics import MetricsRow, read_metrics_csv

log = logging.getLogger(__name__)

# figure id -> metrics field
FIGURES = {"bias": "std_abs_bias", "se": "emp_se", "coverage": "coverage", "rmse": "rmse"}
PLOT_COLUMNS = ("figure", "scenario", "estimator", "event_time", "value")
PALETTE = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666")


@dataclass(frozen=True)
class PlotSeries:
    figure: str
    scenario: str
    estimator: str
    points: tuple[tuple[int, float], ...]

    def __post_init__(self):
        xs = [p[0] for p in self.points]
        if xs != sorted(xs):
            raise ValueError("plot points must be sorted by event time")


def build_series(rows: Iterable[MetricsRow]) -> dict[str, list[PlotSeries]]:
    """One series per (figure, scenario, estimator), in first-appearance order."""
    rows = list(rows)
    out: dict[str, list[PlotSeries]] = {}
    for fig, attr in FIGURES.items():
        groups: dict[tuple[str, str], list[tuple[int, float]]] = {}
        for r in rows:
            groups.setdefault((r.scenario, r.estimator_id), []).append((r.event_time, getattr(r, attr)))
        out[fig] = [PlotSeries(fig, sc, est, tuple(sorted(pts))) for (sc, est), pts in groups.items()]
    return out


def affine(v, lo: float, hi: float, p0: float, p1: float):
    """Map ``[lo, hi]`` onto ``[p0, p1]`` linearly; a degenerate range maps to the midpoint."""
    v = np.asarray(v, dtype=float)
    if hi == lo:
        return np.full_like(v, (p0 + p1) / 2.0)
    return p0 + (v - lo) / (hi - lo) * (p1 - p0)


@dataclass(frozen=True)
class SvgLayout:
    panel_width: float = 220.0
    panel_height: float = 160.0
    margin: float = 30.0
    gap: float = 20.0


def svg_chart(series: Sequence[PlotSeries], title: str, layout: SvgLayout = SvgLayout()) -> str:
    """One panel per scenario, one polyline per estimator, shared y range across panels."""
    scenarios = list(dict.fromkeys(s.scenario for s in series))
    estimators = list(dict.fromkeys(s.estimator for s in series))
    vals = [v for s in series for _, v in s.points if np.isfinite(v)]
    xs = [x for s in series for x, _ in s.points]
    lo, hi = (min(vals), max(vals)) if vals else (0.0, 1.0)
    xlo, xhi = (min(xs), max(xs)) if xs else (1, 5)
    L = layout
    width = L.margin * 2 + len(scenarios) * L.panel_width + max(0, len(scenarios) - 1) * L.gap
    height = L.margin * 2 + L.panel_height + 20 * ((len(estimators) + 3) // 4)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" height="{height:g}">',
        f'<text x="{L.margin:g}" y="{L.margin / 2:g}" font-size="12">{title}</text>',
    ]
    for i, sc in enumerate(scenarios):
        x0 = L.margin + i * (L.panel_width + L.gap)
        y0 = L.margin
        parts.append(
            f'<rect x="{x0:g}" y="{y0:g}" width="{L.panel_width:g}" height="{L.panel_height:g}" '
            'fill="none" stroke="#999"/>'
        )
        parts.append(f'<text x="{x0 + 4:g}" y="{y0 + 12:g}" font-size="10">{sc}</text>')
        for s in series:
            if s.scenario != sc:
                continue
            pts = [(x, v) for x, v in s.points if np.isfinite(v)]
            if not pts:
                continue
            px = affine([p[0] for p in pts], xlo, xhi, x0, x0 + L.panel_width)
            # larger values sit higher, so the pixel range runs bottom to top
            py = affine([p[1] for p in pts], lo, hi, y0 + L.panel_height, y0)
            coords = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
            color = PALETTE[estimators.index(s.estimator) % len(PALETTE)]
            parts.append(
                f'<polyline data-scenario="{sc}" data-estimator="{s.estimator}" points="{coords}" '
                f'fill="none" stroke="{color}"/>'
            )
    for k, est in enumerate(estimators):
        lx = L.margin + (k % 4) * 110
        ly = L.margin + L.panel_height + 16 + 20 * (k // 4)
        color = PALETTE[k % len(PALETTE)]
        parts.append(f'<line x1="{lx:g}" y1="{ly - 4:g}" x2="{lx + 16:g}" y2="{ly - 4:g}" stroke="{color}"/>')
        parts.append(f'<text x="{lx + 20:g}" y="{ly:g}" font-size="10">{est}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_plot_data(metrics_paths: Sequence, out_dir, svg: bool = False) -> dict[str, Path]:
    """Write ``plot_<figure>.csv`` (and ``plot_<figure>.svg``) for bias, se, coverage and rmse."""
    rows: list[MetricsRow] = []
    for p in metrics_paths:
        rows.extend(read_metrics_csv(p))
    if not rows:
        log.warning("metrics table is empty; writing empty plot series")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for fig, series in build_series(rows).items():
        path = out / f"plot_{fig}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PLOT_COLUMNS)
            for s in series:
                for j, v in s.points:
                    w.writerow([fig, s.scenario, s.estimator, j, "" if np.isnan(v) else repr(float(v))])
        written[fig] = path
        if svg:
            spath = out / f"plot_{fig}.svg"
            spath.write_text(svg_chart(series, f"{fig} by event time"), encoding="utf-8")
            written[f"{fig}_svg"] = spath
    return written
