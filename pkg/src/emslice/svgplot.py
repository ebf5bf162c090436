"""Minimal self-contained SVG line charts (no plotting dependency).

Output is deterministic: fixed palette, fixed layout, coordinates rounded to
two decimals, no timestamps or generated ids.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]

WIDTH, HEIGHT = 720, 440
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 160, 50, 55


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    raw = np.linspace(lo, hi, n)
    return raw


def _fmt(value: float) -> str:
    text = f"{value:.4g}"
    return text


def line_chart(series: dict[str, tuple[np.ndarray, np.ndarray]], title: str,
               xlabel: str, ylabel: str, path: str | Path,
               y_range: tuple[float, float] | None = None) -> None:
    """Render labelled (x, y) polylines with axes, ticks, and a legend."""
    xs_all = np.concatenate([np.asarray(x, dtype=float)
                             for x, _ in series.values()]) if series else np.array([0.0, 1.0])
    ys_all = np.concatenate([np.asarray(y, dtype=float)
                             for _, y in series.values()]) if series else np.array([0.0, 1.0])
    x_lo, x_hi = float(xs_all.min()), float(xs_all.max())
    if y_range is not None:
        y_lo, y_hi = y_range
    else:
        y_lo, y_hi = float(ys_all.min()), float(ys_all.max())
        pad = 0.05 * max(y_hi - y_lo, 1e-9)
        y_lo, y_hi = y_lo - pad, y_hi + pad
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0

    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def px(x: float) -> float:
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return MARGIN_T + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>',
    ]

    # axes box and ticks
    parts.append(
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="#333" stroke-width="1"/>')
    for tick in _ticks(x_lo, x_hi):
        x = px(tick)
        parts.append(f'<line x1="{x:.2f}" y1="{MARGIN_T + plot_h}" '
                     f'x2="{x:.2f}" y2="{MARGIN_T + plot_h + 5}" stroke="#333"/>')
        parts.append(f'<text x="{x:.2f}" y="{MARGIN_T + plot_h + 20}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="11">{_fmt(tick)}</text>')
    for tick in _ticks(y_lo, y_hi):
        y = py(tick)
        parts.append(f'<line x1="{MARGIN_L - 5}" y1="{y:.2f}" '
                     f'x2="{MARGIN_L}" y2="{y:.2f}" stroke="#333"/>')
        parts.append(f'<text x="{MARGIN_L - 9}" y="{y + 4:.2f}" '
                     f'text-anchor="end" font-family="sans-serif" '
                     f'font-size="11">{_fmt(tick)}</text>')
        parts.append(f'<line x1="{MARGIN_L}" y1="{y:.2f}" '
                     f'x2="{MARGIN_L + plot_w}" y2="{y:.2f}" '
                     f'stroke="#ddd" stroke-width="0.5"/>')

    parts.append(f'<text x="{MARGIN_L + plot_w / 2:.0f}" y="{HEIGHT - 12}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="13">{xlabel}</text>')
    parts.append(f'<text x="18" y="{MARGIN_T + plot_h / 2:.0f}" '
                 f'text-anchor="middle" font-family="sans-serif" font-size="13" '
                 f'transform="rotate(-90 18 {MARGIN_T + plot_h / 2:.0f})">'
                 f'{ylabel}</text>')

    for k, (label, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{px(float(x)):.2f},{py(float(y)):.2f}"
                       for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.6"/>')
        ly = MARGIN_T + 14 + 20 * k
        lx = MARGIN_L + plot_w + 12
        parts.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 22}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2.5"/>')
        parts.append(f'<text x="{lx + 28}" y="{ly + 4}" '
                     f'font-family="sans-serif" font-size="12">{label}</text>')

    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
