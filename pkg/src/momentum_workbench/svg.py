"""Tiny standalone SVG charts (no plotting dependency, byte-stable output)."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

W, H = 800, 400
ML, MR, MT, MB = 80, 20, 40, 50


def _scale(lo, hi, a, b):
    if hi == lo:
        hi = lo + 1.0
    return lambda v: a + (v - lo) / (hi - lo) * (b - a)


def _frame(title, x_labels, y_lo, y_hi, body):
    sy = _scale(y_lo, y_hi, H - MB, MT)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{ML}" y1="{H - MB}" x2="{W - MR}" y2="{H - MB}" stroke="black"/>',
        f'<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{H - MB}" stroke="black"/>',
    ]
    for k in range(5):
        v = y_lo + (y_hi - y_lo) * k / 4
        y = sy(v)
        parts.append(f'<line x1="{ML - 4}" y1="{y:.2f}" x2="{W - MR}" y2="{y:.2f}" '
                     f'stroke="#ddd"/>')
        parts.append(f'<text x="{ML - 6}" y="{y + 4:.2f}" text-anchor="end">{v:.4g}</text>')
    for x, label in x_labels:
        parts.append(f'<text x="{x:.2f}" y="{H - MB + 16}" text-anchor="middle">'
                     f'{escape(label)}</text>')
    parts.extend(body)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def line_chart(dates: Sequence, values: Sequence[float], title: str = "Cumulative Return") -> str:
    """Line chart against a date axis with about six tick labels."""
    n = len(values)
    lo, hi = float(min(values)), float(max(values))
    sx = _scale(0, max(n - 1, 1), ML, W - MR)
    sy = _scale(lo, hi, H - MB, MT)
    pts = " ".join(f"{sx(i):.2f},{sy(float(v)):.2f}" for i, v in enumerate(values))
    step = max(1, (n - 1) // 5)
    ticks = [(sx(i), str(dates[i])) for i in range(0, n, step)]
    body = [f'<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" points="{pts}"/>']
    return _frame(title, ticks, lo, hi, body)


def scatter_chart(xs: Sequence[float], ys: Sequence[float], title: str = "",
                  x_label: str = "", y_label: str = "") -> str:
    xlo, xhi = float(min(xs)), float(max(xs))
    ylo, yhi = float(min(ys)), float(max(ys))
    sx = _scale(xlo, xhi, ML, W - MR)
    sy = _scale(ylo, yhi, H - MB, MT)
    body = [f'<circle cx="{sx(float(x)):.2f}" cy="{sy(float(y)):.2f}" r="3" fill="#d62728"/>'
            for x, y in zip(xs, ys)]
    body.append(f'<text x="{(ML + W - MR) / 2:.1f}" y="{H - 12}" text-anchor="middle">'
                f'{escape(x_label)}</text>')
    body.append(f'<text x="16" y="{(MT + H - MB) / 2:.1f}" text-anchor="middle" '
                f'transform="rotate(-90 16 {(MT + H - MB) / 2:.1f})">{escape(y_label)}</text>')
    ticks = [(sx(xlo + (xhi - xlo) * k / 4), f"{xlo + (xhi - xlo) * k / 4:.4g}") for k in range(5)]
    return _frame(title, ticks, ylo, yhi, body)
