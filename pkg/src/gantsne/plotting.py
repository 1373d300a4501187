"""Deterministic SVG scatter plots and PGM image mosaics.

SVG profile: 800x800 canvas, 40 px margins, radius-3 circles, coordinates
printed with two decimals. The tight bounding box of the data is mapped
onto the plot area with a shared scale on both axes, so an embedding keeps
its aspect ratio. A degenerate box (one point, or all points equal) maps to
the canvas centre. 3-D points are projected orthographically after rotating
by azimuth 30 degrees about the vertical axis and elevation 20 degrees about
the horizontal axis.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import InputError

__all__ = [
    "CANVAS",
    "MARGIN",
    "RADIUS",
    "LABEL_PALETTE",
    "SOURCE_COLORS",
    "project_3d",
    "render_svg",
    "mosaic",
    "write_pgm",
]

CANVAS = 800
MARGIN = 40
RADIUS = 3
AZIMUTH_DEG = 30.0
ELEVATION_DEG = 20.0

# Tableau-10, indexed by digit label.
LABEL_PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)
SOURCE_COLORS = {"real": "#1f4fd8", "synthetic": "#d62020"}
FALLBACK_COLOR = "#555555"


def project_3d(points: np.ndarray) -> np.ndarray:
    az = math.radians(AZIMUTH_DEG)
    el = math.radians(ELEVATION_DEG)
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    u = x * math.cos(az) - y * math.sin(az)
    depth = x * math.sin(az) + y * math.cos(az)
    v = z * math.cos(el) - depth * math.sin(el)
    return np.column_stack([u, v])


def _to_canvas(xy: np.ndarray) -> np.ndarray:
    if len(xy) == 0:
        return xy
    lo = xy.min(axis=0)
    hi = xy.max(axis=0)
    span = float((hi - lo).max())
    centre = np.full(2, CANVAS / 2.0)
    if span == 0.0:
        return np.tile(centre, (len(xy), 1))
    scale = (CANVAS - 2 * MARGIN) / span
    mid = (lo + hi) / 2.0
    out = centre + (xy - mid) * scale
    # SVG y grows downwards.
    out[:, 1] = CANVAS - out[:, 1]
    return out


def render_svg(
    points,
    path,
    labels: Optional[Sequence[int]] = None,
    sources: Optional[Sequence[str]] = None,
    title: Optional[str] = None,
) -> None:
    """Scatter *points* (N x 2 or N x 3) to an SVG file.

    Colour is by source tag when *sources* is given (compare mode), else by
    digit label, else a single neutral colour.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        pts = pts.reshape(0, 2)
    if pts.ndim != 2 or pts.shape[1] not in (2, 3):
        raise InputError(f"expected N x 2 or N x 3 points, got shape {pts.shape}")
    xy = project_3d(pts) if pts.shape[1] == 3 else pts
    xy = _to_canvas(xy)

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS}" height="{CANVAS}" '
        f'viewBox="0 0 {CANVAS} {CANVAS}">',
        f'<rect x="0" y="0" width="{CANVAS}" height="{CANVAS}" fill="#ffffff"/>',
    ]
    if title:
        esc = title.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        lines.append(f'<title>{esc}</title>')
    lo, hi = MARGIN, CANVAS - MARGIN
    lines.append(f'<line x1="{lo}" y1="{hi}" x2="{hi}" y2="{hi}" stroke="#000000" stroke-width="1"/>')
    lines.append(f'<line x1="{lo}" y1="{hi}" x2="{lo}" y2="{lo}" stroke="#000000" stroke-width="1"/>')
    for i, (cx, cy) in enumerate(xy):
        if sources is not None:
            color = SOURCE_COLORS.get(sources[i], FALLBACK_COLOR)
        elif labels is not None:
            color = LABEL_PALETTE[int(labels[i]) % 10]
        else:
            color = FALLBACK_COLOR
        lines.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{RADIUS}" fill="{color}" fill-opacity="0.7"/>')
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def mosaic(images: np.ndarray, cols: int = 5, side: int = 28) -> np.ndarray:
    """Tile raw 0..255 images (N x side*side) into a grid of uint8 pixels."""
    images = np.asarray(images)
    n = len(images)
    rows = max(1, math.ceil(n / cols))
    out = np.zeros((rows * side, cols * side), dtype=np.uint8)
    for k, img in enumerate(images):
        r, c = divmod(k, cols)
        tile = np.clip(np.rint(img), 0, 255).astype(np.uint8).reshape(side, side)
        out[r * side:(r + 1) * side, c * side:(c + 1) * side] = tile
    return out


def write_pgm(pixels: np.ndarray, path) -> None:
    """Binary PGM (P5, maxval 255)."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
