"""Minimal native SVG plot of a gamma-scan: data points, fitted curve, gamma markers."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import __version__

WIDTH, HEIGHT = 640, 400
MARGIN = {"left": 70, "right": 20, "top": 30, "bottom": 50}


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


def fringe_svg(positions_mm: Sequence[float], counts: Sequence[float], model=None,
               markers_mm: Sequence[tuple[str, float]] = (), title: str = "") -> str:
    """Render a scan. ``model`` maps positions (mm) to fitted counts; markers are (label, mm)."""
    x = np.asarray(positions_mm, dtype=float)
    y = np.asarray(counts, dtype=float)
    xs = np.linspace(x[0], x[-1], 400)
    ys = model(xs) if model is not None else np.array([])
    ymax = max(float(y.max()), float(ys.max()) if ys.size else 0.0) * 1.05 or 1.0
    x0, x1 = float(x[0]), float(x[-1])
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(v):
        return MARGIN["left"] + pw * (v - x0) / (x1 - x0)

    def py(v):
        return MARGIN["top"] + ph * (1 - v / ymax)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f"<!-- neutron_chsh {__version__} -->",
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="14">{title}</text>',
    ]
    bottom, left = MARGIN["top"] + ph, MARGIN["left"]
    out.append(f'<line x1="{left}" y1="{bottom}" x2="{left + pw}" y2="{bottom}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{MARGIN["top"]}" x2="{left}" y2="{bottom}" stroke="black"/>')
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{_fmt(px(t))}" y1="{bottom}" x2="{_fmt(px(t))}" y2="{bottom + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(px(t))}" y="{bottom + 18}" text-anchor="middle" font-size="11">{t:g}</text>')
    for t in _ticks(0.0, ymax):
        out.append(f'<line x1="{left - 5}" y1="{_fmt(py(t))}" x2="{left}" y2="{_fmt(py(t))}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{_fmt(py(t) + 4)}" text-anchor="end" font-size="11">{t:g}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{HEIGHT - 10}" text-anchor="middle" font-size="12">'
               "stage displacement (mm)</text>")
    out.append(f'<text x="16" y="{MARGIN["top"] + ph / 2}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2})">counts</text>')

    for label, m in markers_mm:
        if x0 <= m <= x1:
            out.append(f'<line x1="{_fmt(px(m))}" y1="{MARGIN["top"]}" x2="{_fmt(px(m))}" y2="{bottom}" '
                       'stroke="gray" stroke-dasharray="4,4"/>')
            out.append(f'<text x="{_fmt(px(m) + 3)}" y="{MARGIN["top"] + 12}" font-size="11" fill="gray">'
                       f"{label}</text>")
    if ys.size:
        pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(xs, ys))
        out.append(f'<polyline points="{pts}" fill="none" stroke="crimson" stroke-width="1.5"/>')
    for a, b in zip(x, y):
        out.append(f'<circle cx="{_fmt(px(a))}" cy="{_fmt(py(b))}" r="2.5" fill="navy"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
