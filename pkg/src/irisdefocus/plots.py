"""Minimal SVG line charts drawn from ``report.json``.

Each figure is a set of polylines (one ``<path>`` per series) inside a pair
of labelled axes. Sections absent from the report are skipped with a
warning.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .logistic import logistic

log = logging.getLogger("irisdefocus")

WIDTH, HEIGHT = 480, 320
MARGIN = 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


class Series:
    def __init__(self, label: str, x: Sequence[float], y: Sequence[float],
                 color: str = "#000000", width: float = 1.0):
        pts = [(float(a), float(b)) for a, b in zip(x, y)
               if b is not None and not math.isnan(float(b))]
        self.label, self.points, self.color, self.width = label, pts, color, width


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def line_chart(series: Sequence[Series], title: str, xlabel: str, ylabel: str,
               xlim: tuple[float, float] | None = None,
               ylim: tuple[float, float] | None = None) -> str:
    """Render series as polylines with axes; returns the SVG document."""
    xs = [p[0] for s in series for p in s.points] or [0.0, 1.0]
    ys = [p[1] for s in series for p in s.points] or [0.0, 1.0]
    x0, x1 = xlim or (min(xs), max(xs))
    y0, y1 = ylim or (min(ys), max(ys))
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def sx(v):
        return MARGIN + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return HEIGHT - MARGIN - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="10">',
           f'<title>{escape(title)}</title>',
           f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="12">'
           f'{escape(title)}</text>',
           f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" '
           f'y2="{HEIGHT - MARGIN}" stroke="black"/>',
           f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" '
           f'stroke="black"/>']
    for t in _ticks(x0, x1):
        out.append(f'<text x="{sx(t):.1f}" y="{HEIGHT - MARGIN + 14}" '
                   f'text-anchor="middle">{t:.3g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<text x="{MARGIN - 4}" y="{sy(t) + 3:.1f}" text-anchor="end">{t:.3g}</text>')
    out.append(f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{HEIGHT / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {HEIGHT / 2:.1f})">{escape(ylabel)}</text>')
    for s in series:
        if not s.points:
            continue
        d = " ".join(f"{'M' if i == 0 else 'L'}{sx(x):.2f},{sy(y):.2f}"
                     for i, (x, y) in enumerate(s.points))
        out.append(f'<path d="{d}" fill="none" stroke="{s.color}" '
                   f'stroke-width="{s.width}"><title>{escape(s.label)}</title></path>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def psychometric_svg(section: dict) -> str:
    curves = section.get("curves", [])
    levels = sorted({r[0] for c in curves for r in c["rates"]}) or [0.0, 8.0]
    grid = np.linspace(min(levels), max(levels), 81)
    series = [Series(c["participant"], grid, logistic(grid, c["a"], c["b"]), "#9e9e9e")
              for c in curves]
    pooled = section.get("pooled")
    if pooled:
        series.append(Series("pooled", grid, logistic(grid, pooled["a"], pooled["b"]),
                             "#000000", 2.5))
    return line_chart(series, "Miss rate against defocus", "sigma (px)", "P(same)",
                      ylim=(0.0, 1.0))


def crr_sigma_svg(section: dict) -> str:
    rows = section["crr"]
    x = [r["sigma_px"] for r in rows]
    series = [Series("within level", x, [r["crr_percent"] for r in rows], COLORS[0], 2),
              Series("against in-focus", x, [r["crr_vs_focus_percent"] for r in rows],
                     COLORS[1], 2)]
    return line_chart(series, "CRR against defocus", "sigma (px)", "CRR (%)", ylim=(0, 100))


def crr_distance_svg(section: dict) -> str:
    sweep = section["sweep"]
    pts = sweep["points"]
    x = [p["distance_mm"] for p in pts]
    series = [Series("measured", x, [p["crr_percent"] for p in pts], COLORS[0], 2)]
    fit = sweep.get("fit", {})
    if fit.get("status") == "ok" and x:
        grid = np.linspace(min(x), max(x), 81)
        series.append(Series("sigmoid fit", grid, 100.0 * logistic(grid, fit["a"], fit["b"]),
                             COLORS[1], 1.5))
    return line_chart(series, "CRR against eye distance", "distance (mm)", "CRR (%)",
                      ylim=(0, 100))


def hd_histogram_svg(section: dict) -> str:
    hist = section["hd_histogram"]
    bins = np.asarray(hist["bins"])
    centers = 0.5 * (bins[:-1] + bins[1:])
    series = []
    for i, (sigma, h) in enumerate(sorted(hist["levels"].items(), key=lambda kv: float(kv[0]))):
        color = COLORS[i % len(COLORS)]
        for kind, width in (("intra", 2.0), ("inter", 1.0)):
            counts = np.asarray(h[kind], dtype=float)
            frac = counts / counts.sum() if counts.sum() else counts
            series.append(Series(f"{kind} sigma={sigma}", centers, frac, color, width))
    return line_chart(series, "Hamming distance distributions", "HD", "fraction of pairs",
                      xlim=(0.0, 1.0))


FIGURES = (
    ("psychometric.svg", ("psycho",), psychometric_svg),
    ("crr_sigma.svg", ("auth",), crr_sigma_svg),
    ("crr_distance.svg", ("gaze", "sweep"), crr_distance_svg),
    ("hd_histogram.svg", ("auth",), hd_histogram_svg),
)


def write_plots(report: dict, out_dir: str | Path) -> list[Path]:
    """Write every figure whose report section exists; returns the paths written."""
    out_dir = Path(out_dir)
    written = []
    for name, keys, render in FIGURES:
        section = report.get(keys[0])
        if not section or any(k not in section for k in keys[1:]):
            log.warning("report has no %s section; skipping %s", ".".join(keys), name)
            continue
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / name
        path.write_text(render(section))
        written.append(path)
    return written
