"""Minimal deterministic SVG line plots."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

__all__ = ["emit_plot", "render_svg"]

_W, _H = 480, 320
_PAD = dict(left=60, right=20, top=20, bottom=45)
_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]


def _fmt(v):
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (m * step) <= n:
            step *= m
            break
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * step:
        out.append(round(v, 12))
        v += step
    return out


def render_svg(series, markers=(), xlabel="", ylabel=""):
    """SVG text for ``series = [(label, xs, ys), ...]`` with vertical ``markers = [(x, label)]``."""
    pts = [(x, y) for _, xs, ys in series for x, y in zip(xs, ys)
           if math.isfinite(x) and math.isfinite(y)]
    if not pts:
        raise ValueError("nothing to plot: the series are empty")
    xs_all = [p[0] for p in pts] + [m[0] for m in markers if math.isfinite(m[0])]
    ys_all = [p[1] for p in pts]
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(0.0, min(ys_all)), max(ys_all)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y1 = y0 + 1
    y1 *= 1.05
    pw = _W - _PAD["left"] - _PAD["right"]
    ph = _H - _PAD["top"] - _PAD["bottom"]

    def sx(x):
        return _PAD["left"] + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return _PAD["top"] + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
           f'<rect x="{_PAD["left"]}" y="{_PAD["top"]}" width="{pw}" height="{ph}" '
           'fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        out.append(f'<text x="{sx(t):.2f}" y="{_PAD["top"] + ph + 15}" '
                   f'text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<text x="{_PAD["left"] - 5}" y="{sy(t) + 4:.2f}" '
                   f'text-anchor="end">{_fmt(t)}</text>')
    out.append(f'<text x="{_PAD["left"] + pw / 2:.2f}" y="{_H - 8}" '
               f'text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{_PAD["top"] + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {_PAD["top"] + ph / 2:.2f})">{escape(ylabel)}</text>')
    for x, label in markers:
        if not math.isfinite(x):
            continue
        out.append(f'<line x1="{sx(x):.2f}" y1="{_PAD["top"]}" x2="{sx(x):.2f}" '
                   f'y2="{_PAD["top"] + ph}" stroke="gray" stroke-dasharray="4 3"/>')
        out.append(f'<text x="{sx(x) + 3:.2f}" y="{_PAD["top"] + 12}">{escape(label)}</text>')
    for k, (label, xs, ys) in enumerate(series):
        color = _COLORS[k % len(_COLORS)]
        coords = [(sx(x), sy(y)) for x, y in zip(xs, ys) if math.isfinite(y)]
        if len(coords) > 1:
            path = " ".join(f"{a:.2f},{b:.2f}" for a, b in coords)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}"/>')
        for a, b in coords:
            out.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3" fill="{color}"/>')
        out.append(f'<text x="{_PAD["left"] + pw - 5}" y="{_PAD["top"] + 14 * (k + 1)}" '
                   f'text-anchor="end" fill="{color}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(series, markers, path, xlabel="", ylabel=""):
    text = render_svg(series, markers, xlabel, ylabel)
    with open(path, "w") as fh:
        fh.write(text)
    return path
