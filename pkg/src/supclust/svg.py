"""Minimal deterministic SVG output: scatter frames, frequency polygons and
heat maps.  Numbers are written with fixed precision so identical inputs
give byte-identical files."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
    "#e377c2", "#17becf", "#bcbd22", "#000080", "#800000", "#008080",
]
MUTED = "#7f7f7f"

W, H = 640, 480
MARGIN = 50


def _num(v: float) -> str:
    return f"{v:.3f}".rstrip("0").rstrip(".") if abs(v) < 1e12 else f"{v:.6g}"


class _Canvas:
    def __init__(self, title: str, width: int = W, height: int = H):
        self.width, self.height = width, height
        self.parts = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">',
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
            f'<text x="{width / 2:.0f}" y="24" text-anchor="middle" font-family="sans-serif" '
            f'font-size="15">{escape(title)}</text>',
        ]

    def add(self, element: str):
        self.parts.append(element)

    def text(self, x, y, s, size=11, anchor="middle"):
        self.add(f'<text x="{_num(x)}" y="{_num(y)}" text-anchor="{anchor}" '
                 f'font-family="sans-serif" font-size="{size}">{escape(str(s))}</text>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


class _Frame:
    """Maps data coordinates into the plotting rectangle."""

    def __init__(self, xlim, ylim, width=W, height=H, equal=False):
        x0, x1 = xlim
        y0, y1 = ylim
        if x1 <= x0:
            x0, x1 = x0 - 1, x1 + 1
        if y1 <= y0:
            y0, y1 = y0 - 1, y1 + 1
        pw, ph = width - 2 * MARGIN, height - 2 * MARGIN
        sx, sy = pw / (x1 - x0), ph / (y1 - y0)
        if equal:
            sx = sy = min(sx, sy)
        self.x0, self.y0, self.sx, self.sy = x0, y0, sx, sy
        self.height = height

    def x(self, v):
        return MARGIN + (v - self.x0) * self.sx

    def y(self, v):
        return self.height - MARGIN - (v - self.y0) * self.sy


def _axes(canvas, frame, xlim, ylim, xlabel="", ylabel=""):
    left, right = frame.x(xlim[0]), frame.x(xlim[1])
    bottom, top = frame.y(ylim[0]), frame.y(ylim[1])
    canvas.add(f'<path d="M{_num(left)},{_num(top)} L{_num(left)},{_num(bottom)} '
               f'L{_num(right)},{_num(bottom)}" fill="none" stroke="black" stroke-width="1"/>')
    for v in np.linspace(xlim[0], xlim[1], 5):
        canvas.text(frame.x(v), bottom + 16, _num(v), size=10)
    for v in np.linspace(ylim[0], ylim[1], 5):
        canvas.text(left - 6, frame.y(v) + 4, _num(v), size=10, anchor="end")
    if xlabel:
        canvas.text((left + right) / 2, bottom + 34, xlabel)
    if ylabel:
        canvas.text(14, (top + bottom) / 2, ylabel)


def _limits(values, pad=0.05):
    lo, hi = float(np.min(values)), float(np.max(values))
    span = hi - lo if hi > lo else 1.0
    return lo - pad * span, hi + pad * span


def scatter_svg(points, labels=None, title: str = "", noise_mask=None, tiny_threshold: int = 2,
                limits=None) -> str:
    """2-D scatter coloured by label.

    Members of clusters with at most ``tiny_threshold`` points are drawn as
    grey crosses; points flagged in ``noise_mask`` get a black outline.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] < 2:
        pts = np.column_stack([pts.reshape(len(pts), -1)[:, 0], np.zeros(len(pts))])
    pts = pts[:, :2]
    n = pts.shape[0]
    labels = np.zeros(n, int) if labels is None else np.asarray(labels).ravel()
    noise = np.zeros(n, bool) if noise_mask is None else np.asarray(noise_mask, bool).ravel()
    xlim, ylim = limits if limits is not None else (_limits(pts[:, 0]), _limits(pts[:, 1]))
    canvas = _Canvas(title)
    frame = _Frame(xlim, ylim, equal=True)
    _axes(canvas, frame, xlim, ylim)
    ids, inv, sizes = np.unique(labels, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    # colour rank by cluster size (largest first), then id
    order = sorted(range(ids.size), key=lambda c: (-sizes[c], c))
    colour = {}
    for rank, c in enumerate(order):
        colour[c] = PALETTE[rank % len(PALETTE)]
    for i in range(n):
        cx, cy = frame.x(pts[i, 0]), frame.y(pts[i, 1])
        c = inv[i]
        if sizes[c] <= tiny_threshold:
            d = 3.5
            canvas.add(f'<path d="M{_num(cx - d)},{_num(cy - d)} L{_num(cx + d)},{_num(cy + d)} '
                       f'M{_num(cx - d)},{_num(cy + d)} L{_num(cx + d)},{_num(cy - d)}" '
                       f'stroke="{MUTED}" stroke-width="1.2"/>')
        else:
            stroke = ' stroke="black" stroke-width="0.8"' if noise[i] else ""
            canvas.add(f'<circle cx="{_num(cx)}" cy="{_num(cy)}" r="3" fill="{colour[c]}"{stroke}/>')
    return canvas.render()


def polygon_svg(midpoints, counts, valleys=(), peaks=(), title: str = "") -> str:
    """Frequency polygon with dashed markers at valleys and dotted ones at peaks."""
    mids = np.asarray(midpoints, dtype=float)
    cnt = np.asarray(counts, dtype=float)
    width = mids[1] - mids[0] if mids.size > 1 else 1.0
    xlim = (0.0, float(mids[-1] + width / 2))
    ylim = (0.0, float(max(cnt.max(), 1.0) * 1.05))
    canvas = _Canvas(title)
    frame = _Frame(xlim, ylim)
    _axes(canvas, frame, xlim, ylim, "pairwise distance", "count")
    path = " ".join(f"{'M' if i == 0 else 'L'}{_num(frame.x(m))},{_num(frame.y(c))}"
                    for i, (m, c) in enumerate(zip(mids, cnt)))
    canvas.add(f'<path d="{path}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>')
    for v in valleys:
        x = frame.x(v)
        canvas.add(f'<line x1="{_num(x)}" y1="{_num(frame.y(ylim[0]))}" x2="{_num(x)}" '
                   f'y2="{_num(frame.y(ylim[1]))}" stroke="#d62728" stroke-dasharray="4,3"/>')
        canvas.text(x, frame.y(ylim[1]) - 4, _num(v), size=9)
    for v in peaks:
        x = frame.x(v)
        canvas.add(f'<line x1="{_num(x)}" y1="{_num(frame.y(ylim[0]))}" x2="{_num(x)}" '
                   f'y2="{_num(frame.y(ylim[1]))}" stroke="{MUTED}" stroke-dasharray="1,3"/>')
    return canvas.render()


def _diverging(v: float, vmax: float) -> str:
    t = 0.0 if vmax == 0 else max(-1.0, min(1.0, v / vmax))
    if t >= 0:
        r, g, b = 255, round(255 * (1 - t)), round(255 * (1 - t))
    else:
        r, g, b = round(255 * (1 + t)), round(255 * (1 + t)), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(matrix, labels, title: str = "") -> str:
    """Rows grouped by cluster (largest cluster first), blue-white-red around 0."""
    m = np.asarray(matrix, dtype=float)
    labels = np.asarray(labels).ravel()
    ids, inv, sizes = np.unique(labels, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    rank = {c: k for k, c in enumerate(sorted(range(ids.size), key=lambda c: (-sizes[c], ids[c])))}
    rows = sorted(range(m.shape[0]), key=lambda i: (rank[inv[i]], i))
    vmax = float(np.max(np.abs(m))) if m.size else 0.0
    canvas = _Canvas(title)
    pw, ph = W - 2 * MARGIN, H - 2 * MARGIN
    cw, ch = pw / max(m.shape[1], 1), ph / max(m.shape[0], 1)
    for r_i, i in enumerate(rows):
        for j in range(m.shape[1]):
            canvas.add(f'<rect x="{_num(MARGIN + j * cw)}" y="{_num(MARGIN + r_i * ch)}" '
                       f'width="{_num(cw)}" height="{_num(ch)}" fill="{_diverging(m[i, j], vmax)}"/>')
    # separators between clusters
    for r_i in range(1, len(rows)):
        if inv[rows[r_i]] != inv[rows[r_i - 1]]:
            y = MARGIN + r_i * ch
            canvas.add(f'<line x1="{MARGIN}" y1="{_num(y)}" x2="{W - MARGIN}" y2="{_num(y)}" '
                       f'stroke="black" stroke-width="0.6"/>')
    return canvas.render()
