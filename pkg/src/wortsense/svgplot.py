"""Minimal SVG line charts (no plotting dependency, deterministic output).

Only what the four-panel run figures need: polylines, horizontal reference
lines, axis ticks and small legends, laid out on a fixed grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    color: str
    label: str = ""
    width: float = 1.0
    dashed: bool = False


@dataclass
class RefLine:
    y: float
    color: str
    label: str = ""


@dataclass
class Panel:
    title: str
    xlabel: str
    ylabel: str
    series: list[Series] = field(default_factory=list)
    ref_lines: list[RefLine] = field(default_factory=list)

    def add(self, x, y, color, label="", width=1.0, dashed=False):
        self.series.append(Series(np.asarray(x, float), np.asarray(y, float),
                                  color, label, width, dashed))


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if not math.isfinite(lo) or not math.isfinite(hi):
        return [0.0, 1.0]
    if hi <= lo:
        lo, hi = lo - 1.0, hi + 1.0
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 12))
        v += step
    return ticks or [lo, hi]


def _bounds(values) -> tuple[float, float]:
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return 0.0, 1.0
    lo, hi = float(np.min(finite)), float(np.max(finite))
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.04 * (hi - lo)
    return lo - pad, hi + pad


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _render_panel(panel: Panel, ox: float, oy: float, w: float, h: float) -> list[str]:
    left, right, top, bottom = 52, 12, 26, 34
    px, py = ox + left, oy + top
    pw, ph = w - left - right, h - top - bottom

    all_x = np.concatenate([s.x for s in panel.series]) if panel.series else np.array([0.0, 1.0])
    all_y_parts = [s.y for s in panel.series]
    all_y_parts += [np.array([r.y]) for r in panel.ref_lines]
    all_y = np.concatenate(all_y_parts) if all_y_parts else np.array([0.0, 1.0])
    x0, x1 = _bounds(all_x)
    y0, y1 = _bounds(all_y)

    def sx(v):
        return px + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return py + ph - (v - y0) / (y1 - y0) * ph

    out = [
        f'<rect x="{px:.2f}" y="{py:.2f}" width="{pw:.2f}" height="{ph:.2f}" '
        'fill="white" stroke="#888" stroke-width="1"/>',
        f'<text x="{ox + w / 2:.2f}" y="{oy + 16:.2f}" text-anchor="middle" '
        f'font-size="12" font-weight="bold">{panel.title}</text>',
    ]
    for tx in _nice_ticks(x0, x1):
        if x0 <= tx <= x1:
            out.append(f'<line x1="{sx(tx):.2f}" y1="{py + ph:.2f}" '
                       f'x2="{sx(tx):.2f}" y2="{py + ph + 4:.2f}" stroke="#444"/>')
            out.append(f'<text x="{sx(tx):.2f}" y="{py + ph + 15:.2f}" '
                       f'text-anchor="middle" font-size="9">{_fmt(tx)}</text>')
    for ty in _nice_ticks(y0, y1):
        if y0 <= ty <= y1:
            out.append(f'<line x1="{px - 4:.2f}" y1="{sy(ty):.2f}" '
                       f'x2="{px:.2f}" y2="{sy(ty):.2f}" stroke="#444"/>')
            out.append(f'<text x="{px - 6:.2f}" y="{sy(ty) + 3:.2f}" '
                       f'text-anchor="end" font-size="9">{_fmt(ty)}</text>')
    out.append(f'<text x="{px + pw / 2:.2f}" y="{oy + h - 4:.2f}" text-anchor="middle" '
               f'font-size="10">{panel.xlabel}</text>')
    out.append(f'<text x="{ox + 12:.2f}" y="{py + ph / 2:.2f}" text-anchor="middle" '
               f'font-size="10" transform="rotate(-90 {ox + 12:.2f} {py + ph / 2:.2f})">'
               f'{panel.ylabel}</text>')

    for ref in panel.ref_lines:
        y = sy(ref.y)
        out.append(f'<line x1="{px:.2f}" y1="{y:.2f}" x2="{px + pw:.2f}" y2="{y:.2f}" '
                   f'stroke="{ref.color}" stroke-width="1" stroke-dasharray="6,3"/>')

    for s in panel.series:
        dash = ' stroke-dasharray="4,3"' if s.dashed else ""
        segment: list[str] = []
        for xv, yv in zip(s.x, s.y):
            if math.isfinite(xv) and math.isfinite(yv):
                segment.append(f"{sx(xv):.2f},{sy(yv):.2f}")
            elif segment:
                out.append(f'<polyline points="{" ".join(segment)}" fill="none" '
                           f'stroke="{s.color}" stroke-width="{s.width}"{dash}/>')
                segment = []
        if segment:
            out.append(f'<polyline points="{" ".join(segment)}" fill="none" '
                       f'stroke="{s.color}" stroke-width="{s.width}"{dash}/>')

    ly = py + 12
    for entry in [*panel.series, *panel.ref_lines]:
        if not entry.label:
            continue
        color = entry.color
        out.append(f'<line x1="{px + 8:.2f}" y1="{ly - 3:.2f}" x2="{px + 26:.2f}" '
                   f'y2="{ly - 3:.2f}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{px + 30:.2f}" y="{ly:.2f}" font-size="9">{entry.label}</text>')
        ly += 12
    return out


def render_grid(panels: list[Panel], width: int = 980, height: int = 700,
                ncols: int = 2) -> str:
    nrows = (len(panels) + ncols - 1) // ncols
    pw, ph = width / ncols, height / nrows
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for i, panel in enumerate(panels):
        r, c = divmod(i, ncols)
        parts.extend(_render_panel(panel, c * pw, r * ph, pw, ph))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
