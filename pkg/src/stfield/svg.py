"""Dependency-free SVG emission for the diagnostic plots.

Every plot is a plain scatter/line composition on a linear data-to-pixel
mapping; no plotting library is involved so outputs are byte-stable.
"""

from __future__ import annotations

import numpy as np

WIDTH, HEIGHT, PAD = 640, 480, 50


class Frame:
    """Linear data-to-pixel mapping over a fixed viewport."""

    def __init__(self, xlim, ylim, width=WIDTH, height=HEIGHT, pad=PAD):
        self.x0, self.x1 = float(xlim[0]), float(xlim[1])
        self.y0, self.y1 = float(ylim[0]), float(ylim[1])
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.width, self.height, self.pad = width, height, pad

    def px(self, x):
        return self.pad + (float(x) - self.x0) / (self.x1 - self.x0) * (
            self.width - 2 * self.pad
        )

    def py(self, y):
        return self.height - self.pad - (float(y) - self.y0) / (self.y1 - self.y0) * (
            self.height - 2 * self.pad
        )

    def pts(self, xs, ys):
        return " ".join(f"{self.px(x):.2f},{self.py(y):.2f}" for x, y in zip(xs, ys))


def document(elements, comments=(), width=WIDTH, height=HEIGHT) -> str:
    head = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        *(f"<!-- {c} -->" for c in comments),
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    return "\n".join(head + list(elements) + ["</svg>"])


def polyline(frame, xs, ys, stroke="black", width=1.5, dash=None) -> str:
    dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
    return (
        f'<polyline points="{frame.pts(xs, ys)}" fill="none" '
        f'stroke="{stroke}" stroke-width="{width}"{dash_attr}/>'
    )


def segment(frame, x0, y0, x1, y1, stroke="black", width=1.2, dash=None) -> str:
    dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
    return (
        f'<line x1="{frame.px(x0):.2f}" y1="{frame.py(y0):.2f}" '
        f'x2="{frame.px(x1):.2f}" y2="{frame.py(y1):.2f}" '
        f'stroke="{stroke}" stroke-width="{width}"{dash_attr}/>'
    )


def circles(frame, xs, ys, r=3.0, fill="black") -> str:
    return "".join(
        f'<circle cx="{frame.px(x):.2f}" cy="{frame.py(y):.2f}" r="{r}" fill="{fill}"/>'
        for x, y in zip(xs, ys)
    )


def band(frame, xs, lo, hi, fill="#bbbbbb") -> str:
    fwd = [(x, y) for x, y in zip(xs, lo)]
    back = [(x, y) for x, y in zip(reversed(list(xs)), reversed(list(hi)))]
    pts = " ".join(f"{frame.px(x):.2f},{frame.py(y):.2f}" for x, y in fwd + back)
    return f'<polygon points="{pts}" fill="{fill}" fill-opacity="0.6" stroke="none"/>'


def label(text, x, y, size=13) -> str:
    return f'<text x="{x}" y="{y}" font-size="{size}" font-family="monospace">{text}</text>'


def axes(frame, title, xlab, ylab):
    return [
        segment_px(frame.pad, frame.height - frame.pad, frame.width - frame.pad, frame.height - frame.pad),
        segment_px(frame.pad, frame.pad, frame.pad, frame.height - frame.pad),
        label(title, frame.pad, frame.pad - 16),
        label(xlab, frame.width // 2, frame.height - 12),
        label(ylab, 6, frame.pad - 4),
        label(f"{frame.x0:.3g}", frame.pad, frame.height - frame.pad + 16),
        label(f"{frame.x1:.3g}", frame.width - frame.pad - 20, frame.height - frame.pad + 16),
        label(f"{frame.y0:.3g}", 6, frame.height - frame.pad),
        label(f"{frame.y1:.3g}", 6, frame.pad + 10),
    ]


def segment_px(x0, y0, x1, y1) -> str:
    return (
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" '
        'stroke="black" stroke-width="1"/>'
    )


def _finite_lim(arr, fallback=(0.0, 1.0)):
    arr = np.asarray(arr, dtype=float)
    finite = arr[np.isfinite(arr)]
    if finite.size == 0:
        return fallback
    lo, hi = float(finite.min()), float(finite.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    margin = 0.05 * (hi - lo)
    return lo - margin, hi + margin


def variogram_svg(bv, fit_curve=None, comments=()) -> str:
    """Points, optional envelope band and optional fitted curve."""
    filled = bv.pair_counts > 0
    xs = bv.bin_midpoints[filled]
    ys = bv.gamma_hat[filled]
    ymax_parts = [ys]
    if bv.envelope_high is not None:
        ymax_parts.append(bv.envelope_high[filled])
    frame = Frame((0.0, float(bv.bin_midpoints.max()) * 1.05), _finite_lim(np.concatenate(ymax_parts)))
    el = axes(frame, "binned semivariogram", "distance (km)", "semivariance")
    if bv.envelope_low is not None and bv.envelope_high is not None:
        el.append(band(frame, xs, bv.envelope_low[filled], bv.envelope_high[filled]))
    if fit_curve is not None:
        hs = np.linspace(0.0, float(bv.bin_midpoints.max()), 80)
        el.append(polyline(frame, hs, fit_curve.gamma(hs), stroke="#333333"))
    el.append(circles(frame, xs, ys))
    return document(el, comments)


def scatter_svg(coords, title, comments=()) -> str:
    coords = np.asarray(coords, dtype=float)
    frame = Frame(_finite_lim(coords[:, 0]), _finite_lim(coords[:, 1]))
    el = axes(frame, title, "x", "y")
    el.append(circles(frame, coords[:, 0], coords[:, 1], r=3.5, fill="#205080"))
    return document(el, comments)


def qq_svg(theoretical, ordered, comments=()) -> str:
    frame = Frame(_finite_lim(theoretical), _finite_lim(ordered))
    el = axes(frame, "normal quantile-quantile", "theoretical", "observed")
    lo = max(frame.x0, frame.y0)
    hi = min(frame.x1, frame.y1)
    el.append(polyline(frame, [lo, hi], [lo, hi], stroke="#888888", dash="4,3"))
    step = max(1, len(theoretical) // 400)
    el.append(circles(frame, theoretical[::step], ordered[::step], r=1.8))
    return document(el, comments)


def effects_svg(series, comments=()) -> str:
    days = np.arange(len(series.times))
    lo = np.concatenate(
        [series.lon_effect - series.lon_halfwidth, series.lat_effect - series.lat_halfwidth]
    )
    hi = np.concatenate(
        [series.lon_effect + series.lon_halfwidth, series.lat_effect + series.lat_halfwidth]
    )
    frame = Frame((0, max(len(days) - 1, 1)), _finite_lim(np.concatenate([lo, hi])))
    el = axes(frame, "per-day longitude (solid) and latitude (dashed) effects", "day index", "effect")
    el.append(band(frame, days, series.lon_effect - series.lon_halfwidth, series.lon_effect + series.lon_halfwidth))
    el.append(band(frame, days, series.lat_effect - series.lat_halfwidth, series.lat_effect + series.lat_halfwidth, fill="#d0c0c0"))
    el.append(polyline(frame, days, series.lon_effect, stroke="#205080"))
    el.append(polyline(frame, days, series.lat_effect, stroke="#803020", dash="5,3"))
    return document(el, comments)


def stretch_svg(diag, nx, ny, comments=(), tol=1e-6) -> str:
    """Local stretch crosses: solid = contraction, dashed = expansion.

    Cells whose largest singular value equals one (no distortion) are
    drawn as thin neutral grey crosses, neither solid-black nor dashed.
    """
    frame = Frame(_finite_lim(diag.cell_x), _finite_lim(diag.cell_y))
    el = axes(frame, "deformation stretch grid", "s1 (km)", "s2 (km)")
    xs = np.unique(diag.cell_x)
    dx = 0.4 * (xs[1] - xs[0]) if xs.size > 1 else 0.5
    for cx, cy, svals in zip(diag.cell_x, diag.cell_y, diag.singular_values):
        top = float(np.max(svals))
        if top > 1.0 + tol:
            stroke, width, dash = "black", 1.2, "3,3"
        elif top < 1.0 - tol:
            stroke, width, dash = "black", 1.2, None
        else:
            stroke, width, dash = "#999999", 0.8, None
        el.append(segment(frame, cx - dx, cy, cx + dx, cy, stroke, width, dash))
        el.append(segment(frame, cx, cy - dx, cx, cy + dx, stroke, width, dash))
    return document(el, comments)


def surface_svg(surf, title, comments=()) -> str:
    """Grayscale heat map of a gridded surface (NaN cells left blank)."""
    vals = surf.values
    finite = vals[np.isfinite(vals)]
    if finite.size == 0:
        lo, hi = 0.0, 1.0
    else:
        lo, hi = float(finite.min()), float(finite.max())
        if hi <= lo:
            hi = lo + 1.0
    frame = Frame(
        (float(surf.xs.min()), float(surf.xs.max())),
        (float(surf.ys.min()), float(surf.ys.max())),
    )
    el = axes(frame, title, "s1 (km)", "s2 (km)")
    ny, nx = vals.shape
    for i in range(ny - 1):
        for j in range(nx - 1):
            v = vals[i, j]
            if not np.isfinite(v):
                continue
            shade = int(235 - 200 * (v - lo) / (hi - lo))
            x = frame.px(surf.xs[j])
            y = frame.py(surf.ys[i + 1])
            w = frame.px(surf.xs[j + 1]) - x
            h = frame.py(surf.ys[i]) - y
            el.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" '
                f'fill="rgb({shade},{shade},{shade})"/>'
            )
    el.append(label(f"range {lo:.2f} to {hi:.2f}", frame.pad + 150, frame.pad - 16))
    return document(el, comments)
