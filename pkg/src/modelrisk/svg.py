"""Minimal standalone SVG line and scatter plots."""

from __future__ import annotations

import re
from xml.sax.saxutils import escape as _escape

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"]
W, H = 640, 420
ML, MR, MT, MB = 70, 180, 40, 55


_CTRL = re.compile(r"[\x00-\x08\x0b\x0c\x0e-\x1f\ud800-\udfff\ufffe\uffff]")


def escape(text):
    # characters that XML 1.0 cannot carry are dropped
    return _escape(_CTRL.sub("", str(text)))


def _fmt(v):
    return format(float(v), ".6g")


def _range(vals):
    vals = np.asarray([v for v in vals if np.isfinite(v)], dtype=float)
    if vals.size == 0:
        return 0.0, 1.0
    lo, hi = float(vals.min()), float(vals.max())
    if hi - lo < 1e-12:
        pad = max(abs(lo) * 0.05, 0.05)
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


class _Frame:
    def __init__(self, xr, yr, title, xlabel, ylabel):
        self.xr, self.yr = xr, yr
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
            f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
            f'<text x="{W / 2}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">{escape(title)}</text>',
        ]
        x0, y0, x1, y1 = ML, H - MB, W - MR, MT
        self.parts.append(f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" fill="none" stroke="black"/>')
        for i in range(5):
            fx = xr[0] + (xr[1] - xr[0]) * i / 4
            fy = yr[0] + (yr[1] - yr[0]) * i / 4
            px, py = self.px(fx), self.py(fy)
            self.parts.append(f'<text x="{px:.2f}" y="{y0 + 16}" text-anchor="middle" font-family="sans-serif" font-size="11">{_fmt(fx)}</text>')
            self.parts.append(f'<text x="{x0 - 6}" y="{py + 4:.2f}" text-anchor="end" font-family="sans-serif" font-size="11">{_fmt(fy)}</text>')
        self.parts.append(f'<text x="{(x0 + x1) / 2}" y="{H - 12}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(xlabel)}</text>')
        self.parts.append(f'<text x="16" y="{(y0 + y1) / 2}" text-anchor="middle" font-family="sans-serif" font-size="12" '
                          f'transform="rotate(-90 16 {(y0 + y1) / 2})">{escape(ylabel)}</text>')
        self.legend = 0

    def px(self, x):
        return ML + (x - self.xr[0]) / (self.xr[1] - self.xr[0]) * (W - MR - ML)

    def py(self, y):
        return H - MB - (y - self.yr[0]) / (self.yr[1] - self.yr[0]) * (H - MB - MT)

    def add_legend(self, label, color):
        y = MT + 10 + 18 * self.legend
        self.parts.append(f'<rect x="{W - MR + 12}" y="{y - 8}" width="12" height="12" fill="{color}"/>')
        self.parts.append(f'<text x="{W - MR + 30}" y="{y + 2}" font-family="sans-serif" font-size="11">{escape(label)}</text>')
        self.legend += 1

    def note(self, text):
        self.parts.append(f'<text x="{ML + 6}" y="{MT + 14}" font-family="sans-serif" font-size="11">{escape(text)}</text>')

    def done(self):
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def line_plot(series, title="", xlabel="", ylabel="", note=None) -> str:
    """series: list of (label, xs, ys)."""
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys]
    fr = _Frame(_range(xs_all), _range(ys_all), title, xlabel, ylabel)
    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{fr.px(x):.2f},{fr.py(y):.2f}" for x, y in zip(xs, ys) if np.isfinite(y))
        fr.parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{pts}"/>')
        fr.add_legend(label, color)
    if note:
        fr.note(note)
    return fr.done()


def scatter_plot(sets, title="", xlabel="x1", ylabel="x2", note=None) -> str:
    """sets: list of (label, color, xs, ys)."""
    fr = _Frame(_range([x for s in sets for x in s[2]]), _range([y for s in sets for y in s[3]]), title, xlabel, ylabel)
    for label, color, xs, ys in sets:
        circles = "".join(f'<circle cx="{fr.px(x):.2f}" cy="{fr.py(y):.2f}" r="1.3"/>' for x, y in zip(xs, ys))
        fr.parts.append(f'<g fill="{color}" fill-opacity="0.45">{circles}</g>')
        fr.add_legend(label, color)
    if note:
        fr.note(note)
    return fr.done()
