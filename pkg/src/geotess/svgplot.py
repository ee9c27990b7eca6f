"""Small deterministic SVG charts: bar histograms with overlays and trend lines."""

from __future__ import annotations

import math
from typing import Optional, Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 480, 320
MARGIN = 48


def _frame(title: str) -> list[str]:
    x0, y0, x1, y1 = MARGIN, MARGIN // 2, WIDTH - MARGIN // 2, HEIGHT - MARGIN
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="16" text-anchor="middle" font-size="12">{escape(title)}</text>',
        f'<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
    ]


def _plot_box():
    return MARGIN, MARGIN // 2, WIDTH - MARGIN // 2, HEIGHT - MARGIN


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def histogram_svg(values: Sequence[float], overlay: Optional[Sequence[float]] = None,
                  labels: Optional[Sequence[str]] = None, title: str = "") -> str:
    """Bars for ``values`` (e.g. empirical frequencies) and dots for ``overlay``."""
    out = _frame(title)
    x0, y0, x1, y1 = _plot_box()
    vals = [float(v) for v in values]
    ov = [float(v) for v in overlay] if overlay is not None else []
    top = max(vals + ov + [0.0])
    if vals and top > 0:
        n = len(vals)
        w = (x1 - x0) / n
        scale = (y1 - y0) / (1.05 * top)
        for i, v in enumerate(vals):
            h = v * scale
            out.append(f'<rect x="{x0 + i * w + 1:.2f}" y="{y1 - h:.2f}" width="{max(w - 2, 0.5):.2f}" '
                       f'height="{h:.2f}" fill="#8da0cb"/>')
        for i, v in enumerate(ov[:n]):
            out.append(f'<circle cx="{x0 + (i + 0.5) * w:.2f}" cy="{y1 - v * scale:.2f}" r="3" fill="#d95f02"/>')
        names = list(labels) if labels is not None else [str(i) for i in range(n)]
        step = max(1, n // 12)
        for i in range(0, n, step):
            out.append(f'<text x="{x0 + (i + 0.5) * w:.2f}" y="{y1 + 14}" text-anchor="middle" '
                       f'font-size="9">{escape(names[i])}</text>')
        for t in _ticks(0.0, top):
            out.append(f'<text x="{x0 - 4}" y="{y1 - t * scale + 3:.2f}" text-anchor="end" '
                       f'font-size="9">{t:.3g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def trend_svg(x: Sequence[float], series: dict, title: str = "") -> str:
    """One polyline per named series over shared ``x`` values."""
    out = _frame(title)
    x0, y0, x1, y1 = _plot_box()
    xs = [float(v) for v in x]
    ys = [float(v) for s in series.values() for v in s if math.isfinite(float(v))]
    if xs and ys:
        lo_x, hi_x = min(xs), max(xs)
        lo_y, hi_y = 0.0, max(ys) * 1.1 or 1.0
        span_x = hi_x - lo_x or 1.0

        def px(v):
            return x0 + (v - lo_x) / span_x * (x1 - x0 - 20) + 10

        def py(v):
            return y1 - (v - lo_y) / (hi_y - lo_y) * (y1 - y0)

        colors = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"]
        for k, (name, s) in enumerate(series.items()):
            pts = " ".join(f"{px(a):.2f},{py(float(b)):.2f}" for a, b in zip(xs, s))
            c = colors[k % len(colors)]
            out.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="1.5"/>')
            out.append(f'<text x="{x1 - 4}" y="{y0 + 12 * (k + 1)}" text-anchor="end" font-size="9" '
                       f'fill="{c}">{escape(str(name))}</text>')
        for v in xs:
            out.append(f'<text x="{px(v):.2f}" y="{y1 + 14}" text-anchor="middle" font-size="9">{v:g}</text>')
        for t in _ticks(lo_y, hi_y):
            out.append(f'<text x="{x0 - 4}" y="{py(t) + 3:.2f}" text-anchor="end" font-size="9">{t:.3g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
