"""Tiny hand-written SVG output for scatter plots and loss curves."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

# a few stops of a perceptually ordered colormap, interpolated linearly
_STOPS = np.array([
    [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37],
], dtype=np.float64)


def colormap(values) -> list[str]:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return []
    lo, hi = np.nanmin(v), np.nanmax(v)
    u = np.zeros_like(v) if hi <= lo else (v - lo) / (hi - lo)
    pos = u * (len(_STOPS) - 1)
    i = np.clip(np.floor(pos).astype(int), 0, len(_STOPS) - 2)
    f = (pos - i)[:, None]
    rgb = _STOPS[i] * (1 - f) + _STOPS[i + 1] * f
    return ["#%02x%02x%02x" % tuple(int(round(c)) for c in row) for row in rgb]


def _frame(lo, hi, pad=0.05):
    span = np.where(hi > lo, hi - lo, 1.0)
    return lo - pad * span, hi + pad * span


def _panel(xy, colors, x0, y0, size, title, radius):
    lo, hi = _frame(xy.min(axis=0), xy.max(axis=0)) if len(xy) else (np.zeros(2), np.ones(2))
    # equal aspect so distances read correctly
    span = float(max(hi - lo))
    mid = (lo + hi) / 2
    scale = size / span if span > 0 else 1.0
    px = x0 + (xy[:, 0] - mid[0]) * scale + size / 2
    py = y0 + size / 2 - (xy[:, 1] - mid[1]) * scale
    out = [f'<rect x="{x0}" y="{y0}" width="{size}" height="{size}" fill="none" stroke="#999"/>']
    if title:
        out.append(f'<text x="{x0 + size / 2}" y="{y0 - 6}" text-anchor="middle" font-size="12">{escape(title)}</text>')
    for x, y, c in zip(px, py, colors):
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{radius}" fill="{c}"/>')
    return out


def _doc(width, height, body) -> str:
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        *body,
        "</svg>",
        "",
    ])


def scatter_svg(points, color_by=None, title: str = "", size: int = 420, radius: float = 1.6) -> str:
    """2-D scatter, equal aspect, colored by ``color_by`` when given."""
    P = np.asarray(points, dtype=np.float64)
    if P.ndim != 2 or P.shape[1] != 2:
        raise ValueError("scatter_svg needs M x 2 points")
    colors = colormap(color_by) if color_by is not None else ["#3b528b"] * len(P)
    m = 30
    body = _panel(P, colors, m, m, size, title, radius)
    return _doc(size + 2 * m, size + 2 * m, body)


def projections_svg(points, color_by=None, title: str = "", size: int = 300, radius: float = 1.4) -> str:
    """Three axis-aligned projections (xy, xz, yz) of a 3-D cloud side by side."""
    P = np.asarray(points, dtype=np.float64)
    if P.ndim != 2 or P.shape[1] != 3:
        raise ValueError("projections_svg needs M x 3 points")
    colors = colormap(color_by) if color_by is not None else ["#3b528b"] * len(P)
    m = 30
    body = []
    if title:
        body.append(f'<text x="{m}" y="14" font-size="13">{escape(title)}</text>')
    for k, (a, b, name) in enumerate(((0, 1, "x-y"), (0, 2, "x-z"), (1, 2, "y-z"))):
        body += _panel(P[:, [a, b]], colors, m + k * (size + m), m + 10, size, name, radius)
    return _doc(3 * size + 4 * m, size + 2 * m + 10, body)


def curves_svg(series: dict, title: str = "", width: int = 560, height: int = 320, log: bool = False) -> str:
    """Line plot of named series against their index (e.g. per-epoch losses)."""
    m = 40
    palette = ["#3b528b", "#21918c", "#d95f02", "#7570b3", "#e7298a"]
    body = []
    if title:
        body.append(f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    body.append(f'<rect x="{m}" y="{m}" width="{width - 2 * m}" height="{height - 2 * m}" fill="none" stroke="#999"/>')
    data = {}
    for name, ys in series.items():
        y = np.asarray(ys, dtype=np.float64)
        if log:
            y = np.log10(np.where(np.abs(y) > 0, np.abs(y), np.nan))
        data[name] = y
    finite = np.concatenate([y[np.isfinite(y)] for y in data.values()]) if data else np.array([])
    if finite.size == 0:
        return _doc(width, height, body)
    lo, hi = _frame(np.array([finite.min()]), np.array([finite.max()]))
    lo, hi = float(lo[0]), float(hi[0])
    n = max(len(y) for y in data.values())
    for k, (name, y) in enumerate(data.items()):
        xs = m + np.arange(len(y)) / max(n - 1, 1) * (width - 2 * m)
        ys = height - m - (y - lo) / (hi - lo) * (height - 2 * m)
        pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(xs, ys) if np.isfinite(b))
        col = palette[k % len(palette)]
        body.append(f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="1.2"/>')
        body.append(f'<text x="{width - m - 4}" y="{m + 14 + 14 * k}" text-anchor="end" font-size="11" fill="{col}">{escape(name)}</text>')
    label = "log10 " if log else ""
    body.append(f'<text x="{m}" y="{height - 12}" font-size="10">{label}range {lo:.3g} .. {hi:.3g}, {n} steps</text>')
    return _doc(width, height, body)


def write_svg(text: str, path) -> None:
    with open(path, "w") as f:
        f.write(text)
