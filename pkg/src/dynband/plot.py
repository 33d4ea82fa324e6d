"""Dependency-free SVG plots: x-y trajectory overlay and RPE over time."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from ._io import atomic_write
from .errors import EmptySeries

W, H = 640, 480
MARGIN = 60


def _fmt(x):
    return f"{x:.3f}"


def _scaler(xs, ys, equal_aspect):
    x0, x1 = float(np.min(xs)), float(np.max(xs))
    y0, y1 = float(np.min(ys)), float(np.max(ys))
    sx = (W - 2 * MARGIN) / (x1 - x0) if x1 > x0 else 1.0
    sy = (H - 2 * MARGIN) / (y1 - y0) if y1 > y0 else 1.0
    if equal_aspect:
        sx = sy = min(sx, sy)

    def to_px(x, y):
        return MARGIN + (x - x0) * sx, H - MARGIN - (y - y0) * sy

    return to_px, (x0, x1, y0, y1)


def _points(to_px, xs, ys):
    return " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in (to_px(x, y) for x, y in zip(xs, ys)))


def _frame(title, xlabel, ylabel, bounds):
    x0, x1, y0, y1 = bounds
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W // 2}" y="24" text-anchor="middle" font-size="16">{escape(title)}</text>',
        f'<line x1="{MARGIN}" y1="{H - MARGIN}" x2="{W - MARGIN}" y2="{H - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{H - MARGIN}" stroke="black"/>',
        f'<text x="{W // 2}" y="{H - 15}" text-anchor="middle" font-size="13">{escape(xlabel)}</text>',
        f'<text x="18" y="{H // 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 18 {H // 2})">{escape(ylabel)}</text>',
        f'<text x="{MARGIN}" y="{H - MARGIN + 16}" font-size="10">{x0:.3g}</text>',
        f'<text x="{W - MARGIN}" y="{H - MARGIN + 16}" text-anchor="end" font-size="10">{x1:.3g}</text>',
        f'<text x="{MARGIN - 4}" y="{H - MARGIN}" text-anchor="end" font-size="10">{y0:.3g}</text>',
        f'<text x="{MARGIN - 4}" y="{MARGIN + 4}" text-anchor="end" font-size="10">{y1:.3g}</text>',
    ]


def trajectory_svg(gt_xy, est_xy, title="ATE: trajectory (x-y)"):
    """Ground truth (solid) and estimate (dashed) in the x-y plane."""
    gt_xy = np.asarray(gt_xy, dtype=float).reshape(-1, 2)
    est_xy = np.asarray(est_xy, dtype=float).reshape(-1, 2)
    if len(gt_xy) == 0 or len(est_xy) == 0:
        raise EmptySeries("nothing to plot")
    both = np.vstack([gt_xy, est_xy])
    to_px, bounds = _scaler(both[:, 0], both[:, 1], equal_aspect=True)
    parts = _frame(title, "x [m]", "y [m]", bounds)
    parts += [
        f'<polyline fill="none" stroke="black" stroke-width="1.5" '
        f'points="{_points(to_px, gt_xy[:, 0], gt_xy[:, 1])}"/>',
        f'<polyline fill="none" stroke="blue" stroke-width="1.5" stroke-dasharray="6,4" '
        f'points="{_points(to_px, est_xy[:, 0], est_xy[:, 1])}"/>',
        f'<line x1="{W - 170}" y1="40" x2="{W - 140}" y2="40" stroke="black" stroke-width="1.5"/>',
        f'<text x="{W - 134}" y="44" font-size="12">ground truth</text>',
        f'<line x1="{W - 170}" y1="58" x2="{W - 140}" y2="58" stroke="blue" stroke-width="1.5" '
        f'stroke-dasharray="6,4"/>',
        f'<text x="{W - 134}" y="62" font-size="12">estimated</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


def rpe_svg(times, errors, title="RPE: translational error over time"):
    times = np.asarray(times, dtype=float).reshape(-1)
    errors = np.asarray(errors, dtype=float).reshape(-1)
    if times.size == 0 or times.size != errors.size:
        raise EmptySeries("nothing to plot")
    ys = np.concatenate([errors, [0.0]])
    xs = np.concatenate([times, [times[0]]])
    to_px, bounds = _scaler(xs, ys, equal_aspect=False)
    parts = _frame(title, "time [s]", "error [m]", bounds)
    parts += [
        f'<polyline fill="none" stroke="red" stroke-width="1.5" '
        f'points="{_points(to_px, times, errors)}"/>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


def emit_plot(svg_text, path):
    atomic_write(path, svg_text)
    return path
