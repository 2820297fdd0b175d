"""Debug renders: accumulator heatmaps and line overlays."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, ImageDraw

from .geometry import PolarLine

EDGE = (255, 255, 255)
HORIZONTAL = (255, 0, 0)
VERTICAL = (0, 255, 0)
QUAD = (255, 255, 0)


def write_pgm(votes: np.ndarray, path: str | Path) -> None:
    """Binary 8-bit PGM, linearly scaled so the strongest bin is white."""
    v = np.asarray(votes, dtype=float)
    top = v.max() if v.size else 0.0
    img = np.zeros(v.shape, dtype=np.uint8) if top <= 0 else np.round(255 * v / top).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def _endpoints(line: PolarLine, width: int, height: int):
    c, s = math.cos(line.theta), math.sin(line.theta)
    x0, y0 = c * line.rho, s * line.rho
    reach = 2 * math.hypot(width, height)
    return [(x0 - s * reach, y0 + c * reach), (x0 + s * reach, y0 - c * reach)]


def render_lines(
    edges: np.ndarray,
    horizontal: Sequence[PolarLine],
    vertical: Sequence[PolarLine],
    path: str | Path,
    quad=None,
) -> None:
    """Brick edges white, horizontal lines red, vertical lines green."""
    h, w = edges.shape
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    rgb[edges] = EDGE
    img = Image.fromarray(rgb, "RGB")
    draw = ImageDraw.Draw(img)
    for line in horizontal:
        draw.line(_endpoints(line, w, h), fill=HORIZONTAL, width=1)
    for line in vertical:
        draw.line(_endpoints(line, w, h), fill=VERTICAL, width=1)
    if quad is not None:
        pts = list(quad.corners)
        draw.line(pts + pts[:1], fill=QUAD, width=1)
    img.save(path, format="PNG")
