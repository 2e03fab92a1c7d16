"""Gaussian KDE and standalone SVG violin plots."""
from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .errors import ConfigError

SVG_FMT = ".6g"


def silverman_bandwidth(values):
    """``0.9 min(sd, IQR/1.34) n^(-1/5)``; falls back to whichever scale is positive, else 0."""
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        return 0.0
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25) / 1.34
    scales = [s for s in (sd, iqr) if s > 0]
    if not scales:
        return 0.0
    return 0.9 * min(scales) * x.size ** -0.2


def gaussian_kde(values, grid, bandwidth):
    x = np.asarray(values, dtype=float)
    z = (np.asarray(grid, dtype=float)[:, None] - x[None, :]) / bandwidth
    return np.exp(-0.5 * z * z).sum(axis=1) / (x.size * bandwidth * math.sqrt(2.0 * math.pi))


@dataclass(frozen=True)
class KdeCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float


def kde_curve(values, n_points=512, cut=4.0):
    """KDE on ``[min - cut h, max + cut h]``; ``None`` for a degenerate group."""
    x = np.asarray(values, dtype=float)
    h = silverman_bandwidth(x)
    if h <= 0:
        return None
    grid = np.linspace(x.min() - cut * h, x.max() + cut * h, n_points)
    return KdeCurve(grid, gaussian_kde(x, grid, h), h)


@dataclass(frozen=True)
class ViolinDataset:
    labels: tuple
    groups: tuple

    def __post_init__(self):
        if len(self.labels) != len(self.groups) or not self.groups:
            raise ConfigError("need one label per nonempty group")
        groups = tuple(np.asarray(g, dtype=float) for g in self.groups)
        if any(g.size == 0 for g in groups):
            raise ConfigError("violin groups must be nonempty")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))

    @property
    def curves(self):
        return [kde_curve(g) for g in self.groups]

    @property
    def bandwidths(self):
        return [silverman_bandwidth(g) for g in self.groups]


def kde_rows(dataset):
    """``(label, y, density)`` rows for every nondegenerate group."""
    rows = []
    for label, curve in zip(dataset.labels, dataset.curves):
        if curve is None:
            continue
        rows.extend((label, float(y), float(d)) for y, d in zip(curve.grid, curve.density))
    return rows


def _f(x):
    return format(float(x), SVG_FMT)


def _meta_comment(meta):
    text = " ".join(f"{k}={meta[k]}" for k in meta).replace("--", "- -")
    return f"<!-- {text} -->"


def violin_svg(dataset, title="", ylabel="", width_per_group=120, height=400, margin=60, meta=None):
    """Mirrored KDE silhouettes on a shared y axis, with range bars and a mean tick.

    ``meta`` (a mapping) is embedded as an XML comment ahead of the root element.
    """
    curves = dataset.curves
    lo = min(min(g.min(), c.grid[0] if c else g.min()) for g, c in zip(dataset.groups, curves))
    hi = max(max(g.max(), c.grid[-1] if c else g.max()) for g, c in zip(dataset.groups, curves))
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    width = margin * 2 + width_per_group * len(dataset.groups)
    total_h = height + margin * 2

    def ypix(v):
        return margin + (hi - v) / (hi - lo) * height

    out = [] if meta is None else [_meta_comment(meta)]
    out += [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{total_h}" '
            f'viewBox="0 0 {width} {total_h}">',
            f'<rect width="{width}" height="{total_h}" fill="white"/>',
            f'<text x="{width / 2}" y="{margin / 2}" text-anchor="middle" font-size="14">{escape(title)}</text>',
            f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{margin + height}" stroke="black"/>']
    for t in np.linspace(lo, hi, 5):
        y = _f(ypix(t))
        out.append(f'<line x1="{margin - 5}" y1="{y}" x2="{margin}" y2="{y}" stroke="black"/>')
        out.append(f'<text x="{margin - 8}" y="{y}" text-anchor="end" font-size="10">{_f(t)}</text>')
    out.append(f'<text x="15" y="{margin + height / 2}" font-size="12" '
               f'transform="rotate(-90 15 {margin + height / 2})" text-anchor="middle">{escape(ylabel)}</text>')
    half = 0.4 * width_per_group
    for i, (label, g, c) in enumerate(zip(dataset.labels, dataset.groups, curves)):
        cx = margin + width_per_group * (i + 0.5)
        if c is not None:
            scale = half / c.density.max()
            right = [f"{_f(cx + d * scale)},{_f(ypix(y))}" for y, d in zip(c.grid, c.density)]
            left = [f"{_f(cx - d * scale)},{_f(ypix(y))}" for y, d in zip(c.grid[::-1], c.density[::-1])]
            out.append(f'<polygon points="{" ".join(right + left)}" fill="#9ecae1" stroke="#3182bd"/>')
        out.append(f'<line x1="{cx}" y1="{_f(ypix(g.min()))}" x2="{cx}" y2="{_f(ypix(g.max()))}" '
                   f'stroke="black" stroke-width="1.5"/>')
        for v in (g.min(), g.max()):
            out.append(f'<line x1="{cx - 6}" y1="{_f(ypix(v))}" x2="{cx + 6}" y2="{_f(ypix(v))}" stroke="black"/>')
        ym = _f(ypix(g.mean()))
        out.append(f'<line x1="{cx - 12}" y1="{ym}" x2="{cx + 12}" y2="{ym}" stroke="#d62728" stroke-width="2"/>')
        out.append(f'<text x="{cx}" y="{margin + height + 20}" text-anchor="middle" font-size="11">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
