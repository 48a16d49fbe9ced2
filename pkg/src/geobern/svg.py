"""Plain SVG rendering of 2-D plans.

Trajectories are ``<path>`` elements, obstacles ``<circle>`` elements, knot
markers small ``<rect>`` squares and the ``f = rho`` level set a group of
``<polyline>`` elements, so a parser can count each kind unambiguously.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import contourpy
import numpy as np

from .surface import GaussianField, clearance_threshold, sample_lattice

_COLORS = ("#1f5fa8", "#c2410c", "#15803d", "#7e22ce")


def level_set(field: GaussianField, bounds, res: int = 200, level: float | None = None):
    """Polylines of ``f = level`` (default ``rho``) over ``bounds``."""
    xmin, xmax, ymin, ymax = bounds
    xs = np.linspace(xmin, xmax, res)
    ys = np.linspace(ymin, ymax, res)
    X, Y, F, _ = sample_lattice(field, xs, ys)
    level = clearance_threshold(field) if level is None else level
    if field.n_obstacles == 0 or not (F.min() < level < F.max()):
        return []
    return contourpy.contour_generator(X, Y, F).lines(level)


def _pts(P):
    return " ".join(f"{x:.5g},{y:.5g}" for x, y in P)


def render_plan(field: GaussianField, paths, knots=(), bounds=None, res: int = 200, title: str = "") -> str:
    """SVG document for one or more 2-D trajectories over ``field``.

    ``paths`` is a sequence of ``(N, 2)`` arrays; ``knots`` an optional
    sequence of knot-position arrays, one per path.
    """
    if field.dim != 2:
        raise ValueError("SVG output is only produced for 2-D plans")
    paths = [np.asarray(p, dtype=float) for p in paths]
    if bounds is None:
        pts = list(paths)
        if field.n_obstacles:
            pts.append(field.centers - field.radii[:, None])
            pts.append(field.centers + field.radii[:, None])
        allp = np.vstack(pts) if pts else np.array([[-1.0, -1.0], [1.0, 1.0]])
        lo, hi = allp.min(axis=0), allp.max(axis=0)
        pad = 0.05 * max(hi - lo) + 1e-9
        bounds = (lo[0] - pad, hi[0] + pad, lo[1] - pad, hi[1] + pad)
    xmin, xmax, ymin, ymax = bounds
    w, h = xmax - xmin, ymax - ymin
    stroke = 0.004 * max(w, h)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w:.6g} {h:.6g}" '
        f'width="800" height="{800 * h / w:.0f}">',
    ]
    if title:
        out.append(f"<title>{escape(title)}</title>")
    # flip y so the plot reads in world coordinates
    out.append(f'<g transform="translate({-xmin:.6g},{ymax:.6g}) scale(1,-1)">')
    out.append('<g class="obstacles" fill="#9ca3af" fill-opacity="0.35" stroke="#4b5563" '
               f'stroke-width="{stroke:.4g}">')
    for c, r in zip(field.centers, field.radii):
        out.append(f'<circle cx="{c[0]:.6g}" cy="{c[1]:.6g}" r="{r:.6g}"/>')
    out.append("</g>")
    out.append(f'<g class="level-set" fill="none" stroke="#b91c1c" stroke-dasharray="{3 * stroke:.4g}" '
               f'stroke-width="{stroke:.4g}">')
    for line in level_set(field, bounds, res):
        out.append(f'<polyline points="{_pts(line)}"/>')
    out.append("</g>")
    for i, p in enumerate(paths):
        color = _COLORS[i % len(_COLORS)]
        d = "M " + " L ".join(f"{x:.6g} {y:.6g}" for x, y in p)
        out.append(f'<path class="trajectory" d="{d}" fill="none" stroke="{color}" '
                   f'stroke-width="{1.5 * stroke:.4g}"/>')
    s = 3 * stroke
    for i, K in enumerate(knots):
        color = _COLORS[i % len(_COLORS)]
        out.append(f'<g class="knots" fill="{color}">')
        for x, y in np.asarray(K, dtype=float):
            out.append(f'<rect x="{x - s / 2:.6g}" y="{y - s / 2:.6g}" width="{s:.4g}" height="{s:.4g}"/>')
        out.append("</g>")
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
