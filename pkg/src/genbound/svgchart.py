"""Dependency-free SVG line charts for trajectory summaries."""

from __future__ import annotations

import math

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
_W, _H = 720, 420
_ML, _MR, _MT, _MB = 64, 16, 28, 44


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def line_chart(series, title: str, x_label: str = "t", y_label: str = "") -> str:
    """Render [(label, xs, ys), ...] as a self-contained SVG document.

    Non-finite points are dropped per series; axes cover the union of the
    finite data.
    """
    finite = []
    for label, xs, ys in series:
        pts = [(float(x), float(y)) for x, y in zip(xs, ys) if math.isfinite(y)]
        if pts:
            finite.append((label, pts))
    xs_all = [p[0] for _, pts in finite for p in pts] or [0.0, 1.0]
    ys_all = [p[1] for _, pts in finite for p in pts] or [0.0, 1.0]
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(x: float) -> float:
        return _ML + (x - x_lo) / (x_hi - x_lo) * (_W - _ML - _MR)

    def py(y: float) -> float:
        return _H - _MB - (y - y_lo) / (y_hi - y_lo) * (_H - _MT - _MB)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.0f}" y="18" text-anchor="middle" font-size="14">{title}</text>',
    ]
    for yt in _ticks(y_lo, y_hi):
        out.append(
            f'<line x1="{_ML}" y1="{_fmt(py(yt))}" x2="{_W - _MR}" y2="{_fmt(py(yt))}" '
            f'stroke="#ddd" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{_ML - 6}" y="{_fmt(py(yt) + 4)}" text-anchor="end">{yt:.3g}</text>'
        )
    for xt in _ticks(x_lo, x_hi):
        out.append(
            f'<text x="{_fmt(px(xt))}" y="{_H - _MB + 16}" text-anchor="middle">{xt:.3g}</text>'
        )
    out.append(
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>'
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>'
    )
    out.append(
        f'<text x="{_W / 2:.0f}" y="{_H - 8}" text-anchor="middle">{x_label}</text>'
    )
    if y_label:
        out.append(
            f'<text x="14" y="{_H / 2:.0f}" text-anchor="middle" '
            f'transform="rotate(-90 14 {_H / 2:.0f})">{y_label}</text>'
        )
    for i, (label, pts) in enumerate(finite):
        color = _COLORS[i % len(_COLORS)]
        path = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in pts)
        out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = _MT + 16 * i
        out.append(
            f'<line x1="{_W - _MR - 150}" y1="{ly}" x2="{_W - _MR - 126}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>'
            f'<text x="{_W - _MR - 120}" y="{ly + 4}">{label}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
