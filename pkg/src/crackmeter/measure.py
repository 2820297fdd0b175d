"""Crack dimensions in real units and percentage-error statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .annotations import ClassLabel, ImageRecord, PolygonMask, rasterize_fill
from .errors import AlignmentError, NoCracks, ZeroReference
from .rectify import PixelScale

METRICS = ("total_width", "total_height", "max_transverse_width")


def round_half_away(v: float) -> int:
    """Nearest integer, ties away from zero."""
    return int(math.copysign(math.floor(abs(v) + 0.5), v))


@dataclass(frozen=True)
class CrackMeasurement:
    image_id: str
    total_width_px: int
    total_height_px: int
    max_transverse_width_px: int
    scale: PixelScale

    @property
    def total_width_mm(self) -> float:
        return self.total_width_px * self.scale.mm_per_px_x

    @property
    def total_height_mm(self) -> float:
        return self.total_height_px * self.scale.mm_per_px_y

    @property
    def max_transverse_width_mm(self) -> float:
        return self.max_transverse_width_px * self.scale.mm_per_px_x

    def mm(self, metric: str, rounded: bool = True) -> float:
        v = getattr(self, f"{metric}_mm")
        return round_half_away(v) if rounded else v

    def to_dict(self) -> dict:
        cracks = {}
        for m in METRICS:
            cracks[f"{m}_mm"] = self.mm(m)
            cracks[f"{m}_mm_unrounded"] = self.mm(m, rounded=False)
            cracks[f"{m}_px"] = getattr(self, f"{m}_px")
        return {"image_id": self.image_id, "scale": self.scale.to_dict(), "cracks": cracks}


def row_extents(grid: np.ndarray, count: bool = False) -> np.ndarray:
    """Per-row width of a filled mask.

    Default is the leftmost-to-rightmost extent (+1) of each row, gaps
    included; ``count=True`` counts set pixels instead.
    """
    if count:
        return grid.sum(axis=1)
    has = grid.any(axis=1)
    left = np.argmax(grid, axis=1)
    right = grid.shape[1] - 1 - np.argmax(grid[:, ::-1], axis=1)
    return np.where(has, right - left + 1, 0)


def max_transverse_width_px(polygons: Sequence[PolygonMask], count: bool = False) -> int:
    """Widest raster row of one instance mask, measured along x."""
    x1 = min(p.bbox()[0] for p in polygons)
    y1 = min(p.bbox()[1] for p in polygons)
    x2 = max(p.bbox()[2] for p in polygons)
    y2 = max(p.bbox()[3] for p in polygons)
    # integer shift keeps pixel-centre sampling identical to the full frame
    ox, oy = math.floor(x1), math.floor(y1)
    local = [p.translated(-ox, -oy) for p in polygons]
    grid = rasterize_fill(local, int(math.ceil(x2)) - ox + 1, int(math.ceil(y2)) - oy + 1)
    widths = row_extents(grid, count)
    return int(widths.max()) if widths.size else 0


def measure_cracks(warped: ImageRecord, scale: PixelScale, count_pixels: bool = False) -> CrackMeasurement:
    """Overall crack extent and widest transverse row of a rectified image.

    Total width/height span the union of all crack bounding boxes; the max
    transverse width is taken per instance, row by row, and maximised.
    """
    cracks = warped.of_label(ClassLabel.CRACK)
    if not cracks:
        raise NoCracks(f"image {warped.image_id} has no crack instances")
    x1 = min(c.bbox[0] for c in cracks)
    y1 = min(c.bbox[1] for c in cracks)
    x2 = max(c.bbox[2] for c in cracks)
    y2 = max(c.bbox[3] for c in cracks)
    transverse = max(max_transverse_width_px(c.polygons, count_pixels) for c in cracks)
    return CrackMeasurement(
        warped.image_id,
        round_half_away(x2 - x1),
        round_half_away(y2 - y1),
        transverse,
        scale,
    )


@dataclass(frozen=True)
class ErrorReport:
    """Signed mean percentage error and its absolute counterpart.

    ``pairs`` holds (reference, measured) values.
    """

    mpe_signed: float
    mape: float
    pairs: tuple[tuple[float, float], ...] = field(default=())

    def to_dict(self) -> dict:
        return {"mpe_signed": self.mpe_signed, "mape": self.mape, "pairs": [list(p) for p in self.pairs]}


def percentage_error(pairs: Sequence[tuple[float, float]]) -> ErrorReport:
    pairs = tuple((float(a), float(f)) for a, f in pairs)
    if not pairs:
        raise ValueError("need at least one (reference, measured) pair")
    for i, (a, _) in enumerate(pairs):
        if a == 0:
            raise ZeroReference(i)
    n = len(pairs)
    # fsum keeps the result independent of pair order
    signed = 100.0 / n * math.fsum((a - f) / a for a, f in pairs)
    absolute = 100.0 / n * math.fsum(abs(a - f) / abs(a) for a, f in pairs)
    return ErrorReport(signed, absolute, pairs)


def measurement_report(
    measurements: Sequence[CrackMeasurement], references: Sequence[dict] | None = None
) -> dict:
    """JSON-ready document; with references, one ErrorReport per metric.

    References are dicts with ``image_id`` and the three ``*_mm`` values and
    are compared against the rounded millimetre measurements.
    """
    doc = {"measurements": [m.to_dict() for m in measurements]}
    if references is None:
        return doc
    by_id = {m.image_id: m for m in measurements}
    pairs = {m: [] for m in METRICS}
    for ref in references:
        image_id = str(ref.get("image_id"))
        if image_id not in by_id:
            raise AlignmentError(f"reference for unknown image {image_id!r}")
        for m in METRICS:
            if ref.get(f"{m}_mm") is not None:
                pairs[m].append((ref[f"{m}_mm"], by_id[image_id].mm(m)))
    doc["errors"] = {m: percentage_error(p).to_dict() for m, p in pairs.items() if p}
    return doc
