"""Dependency-free SVG emitters: coverage heatmaps, training curves, path overlays.

Output is a pure function of the inputs, so identical inputs give
byte-identical files.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .raytrace import CoverageMap
from .scene import GridSpec, OccupancyGrid

CELL_PX = 10
# dark blue (weak) to yellow (strong)
_RAMP = ((0.0, (48, 18, 59)), (0.25, (70, 134, 251)), (0.5, (27, 229, 181)), (0.75, (250, 186, 57)),
         (1.0, (240, 249, 33)))


def _num(v: float) -> str:
    return format(round(float(v), 3), "g")


def _header(width: float, height: float, seed: int | None, title: str | None = None) -> list[str]:
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_num(width)}" height="{_num(height)}" '
           f'viewBox="0 0 {_num(width)} {_num(height)}">']
    if seed is not None:
        out.append(f"<!-- seed={seed} -->")
    if title:
        out.append(f"<title>{_escape(title)}</title>")
    out.append(f'<rect width="{_num(width)}" height="{_num(height)}" fill="#ffffff"/>')
    return out


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def ramp_color(t: float) -> str:
    """Hex color for t in [0, 1] on a perceptual blue-to-yellow ramp."""
    t = min(max(t, 0.0), 1.0)
    for (t0, c0), (t1, c1) in zip(_RAMP, _RAMP[1:]):
        if t <= t1:
            u = (t - t0) / (t1 - t0)
            rgb = [round(a + (b - a) * u) for a, b in zip(c0, c1)]
            return "#{:02x}{:02x}{:02x}".format(*rgb)
    return "#{:02x}{:02x}{:02x}".format(*_RAMP[-1][1])


def heatmap_svg(cmap: CoverageMap, seed: int | None = None) -> str:
    """Cell-per-rect coverage heatmap; dead cells white; north up."""
    g = cmap.grid
    gains = cmap.gain_array()
    live = np.isfinite(gains)
    lo, hi = (float(gains[live].min()), float(gains[live].max())) if live.any() else (0.0, 0.0)
    span = hi - lo or 1.0
    legend = 40
    w, h = g.nx * CELL_PX, g.ny * CELL_PX + legend
    out = _header(w, h, seed, f"coverage {cmap.tx_id}")
    for i in range(g.nx):
        for j in range(g.ny):
            fill = ramp_color((gains[i, j] - lo) / span) if live[i, j] else "#ffffff"
            y = (g.ny - 1 - j) * CELL_PX
            out.append(f'<rect x="{i * CELL_PX}" y="{y}" width="{CELL_PX}" height="{CELL_PX}" fill="{fill}"/>')
    base = g.ny * CELL_PX
    steps = 20
    bar_w = w / steps
    for k in range(steps):
        out.append(f'<rect x="{_num(k * bar_w)}" y="{base + 8}" width="{_num(bar_w)}" height="12" '
                   f'fill="{ramp_color(k / (steps - 1))}"/>')
    out.append(f'<text x="0" y="{base + 34}" font-size="10" font-family="sans-serif">{_num(lo)} dB</text>')
    out.append(f'<text x="{w}" y="{base + 34}" font-size="10" font-family="sans-serif" '
               f'text-anchor="end">{_num(hi)} dB</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def line_chart_svg(values: Sequence[float], title: str, ylabel: str, seed: int | None = None) -> str:
    """Single-series line chart of ``values`` against episode index."""
    if len(values) == 0:
        raise ValueError("nothing to plot")
    w, h = 640, 360
    left, right, top, bottom = 70, 20, 30, 40
    pw, ph = w - left - right, h - top - bottom
    ys = [float(v) for v in values]
    lo, hi = min(ys), max(ys)
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    n = len(ys)

    def px(k: int, v: float) -> tuple[str, str]:
        x = left + (pw * k / (n - 1) if n > 1 else pw / 2)
        y = top + ph * (hi - v) / (hi - lo)
        return _num(x), _num(y)

    out = _header(w, h, seed, title)
    out.append(f'<text x="{w // 2}" y="18" font-size="14" font-family="sans-serif" '
               f'text-anchor="middle">{_escape(title)}</text>')
    out.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="#000000"/>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="#000000"/>')
    for k in range(5):
        v = lo + (hi - lo) * k / 4
        _, y = px(0, v)
        out.append(f'<text x="{left - 6}" y="{y}" font-size="10" font-family="sans-serif" '
                   f'text-anchor="end">{format(v, ".4g")}</text>')
    out.append(f'<text x="{left}" y="{h - 8}" font-size="10" font-family="sans-serif">0</text>')
    out.append(f'<text x="{left + pw}" y="{h - 8}" font-size="10" font-family="sans-serif" '
               f'text-anchor="end">{n - 1}</text>')
    out.append(f'<text x="{left + pw // 2}" y="{h - 8}" font-size="11" font-family="sans-serif" '
               f'text-anchor="middle">episode</text>')
    out.append(f'<text x="14" y="{top + ph // 2}" font-size="11" font-family="sans-serif" text-anchor="middle" '
               f'transform="rotate(-90 14 {top + ph // 2})">{_escape(ylabel)}</text>')
    pts = " ".join(",".join(px(k, v)) for k, v in enumerate(ys))
    out.append(f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def path_svg(occupancy: OccupancyGrid, grid: GridSpec, cells: Sequence[tuple[int, int]],
             target: tuple[int, int] | None = None, seed: int | None = None) -> str:
    """Occupancy map (blocked cells grey) with a trajectory polyline on top."""
    w, h = grid.nx * CELL_PX, grid.ny * CELL_PX
    out = _header(w, h, seed, "trajectory")
    for i in range(grid.nx):
        for j in range(grid.ny):
            if occupancy.blocked[i, j]:
                y = (grid.ny - 1 - j) * CELL_PX
                out.append(f'<rect x="{i * CELL_PX}" y="{y}" width="{CELL_PX}" height="{CELL_PX}" fill="#808080"/>')

    def center(c: tuple[int, int]) -> tuple[float, float]:
        return (c[0] + 0.5) * CELL_PX, (grid.ny - 1 - c[1] + 0.5) * CELL_PX

    if cells:
        pts = " ".join(f"{_num(x)},{_num(y)}" for x, y in map(center, cells))
        out.append(f'<polyline points="{pts}" fill="none" stroke="#d62728" stroke-width="2"/>')
        x, y = center(cells[0])
        out.append(f'<circle cx="{_num(x)}" cy="{_num(y)}" r="4" fill="#2ca02c"/>')
    if target is not None:
        x, y = center(target)
        r = CELL_PX * 0.4
        out.append(f'<rect x="{_num(x - r)}" y="{_num(y - r)}" width="{_num(2 * r)}" height="{_num(2 * r)}" '
                   f'fill="#1f77b4"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"

