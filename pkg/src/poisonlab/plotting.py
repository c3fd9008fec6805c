"""Bare-bones SVG line charts: axes, polylines and a legend."""

from __future__ import annotations

import math
from pathlib import Path

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def line_chart(series: dict, title: str, path, width: int = 480, height: int = 320) -> None:
    """``series`` maps a label to ``(xs, ys)``. Non-finite points are dropped."""
    pts = {k: [(x, y) for x, y in zip(*v) if math.isfinite(x) and math.isfinite(y)] for k, v in series.items()}
    xs = [p[0] for v in pts.values() for p in v] or [0.0, 1.0]
    ys = [p[1] for v in pts.values() for p in v] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1
    left, right, top, bottom = 60, 20, 30, 40

    def sx(x):
        return left + (x - x0) / (x1 - x0) * (width - left - right)

    def sy(y):
        return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{title}</text>',
           f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" y2="{height - bottom}" stroke="black"/>',
           f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="black"/>',
           f'<text x="{left}" y="{height - 20}" font-size="10">{x0:.3g}</text>',
           f'<text x="{width - right}" y="{height - 20}" font-size="10" text-anchor="end">{x1:.3g}</text>',
           f'<text x="{left - 4}" y="{height - bottom}" font-size="10" text-anchor="end">{y0:.3g}</text>',
           f'<text x="{left - 4}" y="{top + 8}" font-size="10" text-anchor="end">{y1:.3g}</text>']
    for i, (label, p) in enumerate(sorted(pts.items())):
        color = COLORS[i % len(COLORS)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in p)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        out.append(f'<text x="{width - right - 4}" y="{top + 14 * (i + 1)}" font-size="11" '
                   f'text-anchor="end" fill="{color}">{label}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
