"""Brick-anchored perspective rectification.

The pipeline keeps only brick masks, draws their outlines, finds long
horizontal/vertical lines with the Hough transform, takes the outermost pair
of each orientation as the corners of a rectangle on the wall, maps that
rectangle to a fronto-parallel frame and finally fixes the frame's aspect
ratio so warped bricks have their known face proportions.
"""

from __future__ import annotations

import itertools
import math
import statistics
from dataclasses import dataclass, field

import numpy as np

from .annotations import ClassLabel, ImageRecord, Instance, PolygonMask, clip_instances, rasterize_edges
from .errors import InsufficientBricks, InsufficientLines, NoAnchorBricks, ScaleMismatch
from .geometry import Homography, PolarLine, Quadrilateral, homography_from_quad, intersect, warp_polygon
from .hough import HoughConfig, accumulate, extract_lines

MIN_BRICKS = 4
ANCHOR_RATIO_RANGE = (1.5, 6.0)
SCALE_AGREEMENT = 0.01
INTERCEPT_EPS = 1e-6
MAX_FRAME_EXPAND = 1.0


@dataclass(frozen=True)
class BrickSpec:
    """Visible face of one brick unit, in millimetres."""

    face_width_mm: float = 220.0
    face_height_mm: float = 60.0

    def __post_init__(self):
        if not (self.face_width_mm > 0 and self.face_height_mm > 0):
            raise ValueError("brick face dimensions must be positive")
        if self.face_width_mm <= self.face_height_mm:
            raise ValueError("brick face width must exceed its height")

    @property
    def ratio(self) -> float:
        return self.face_width_mm / self.face_height_mm


@dataclass(frozen=True)
class PixelScale:
    mm_per_px_x: float
    mm_per_px_y: float

    def __post_init__(self):
        for v in (self.mm_per_px_x, self.mm_per_px_y):
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"pixel scale must be finite and positive, got {v}")

    @property
    def mismatch(self) -> float:
        return abs(self.mm_per_px_x - self.mm_per_px_y) / self.mm_per_px_x

    def to_dict(self) -> dict:
        return {"mm_per_px_x": self.mm_per_px_x, "mm_per_px_y": self.mm_per_px_y}


@dataclass(frozen=True)
class LinePairSelection:
    top: PolarLine
    bottom: PolarLine
    left: PolarLine
    right: PolarLine
    quad: Quadrilateral


@dataclass(frozen=True)
class AspectCorrection:
    corrected_height: int
    scale: PixelScale
    correction: float
    observed_ratio: float
    anchor_count: int


@dataclass(frozen=True, eq=False)
class Rectification:
    homography: Homography
    scale: PixelScale
    warped: ImageRecord
    selection: LinePairSelection
    correction: AspectCorrection
    initial_size: tuple[int, int]
    horizontal: list[PolarLine] = field(default_factory=list)
    vertical: list[PolarLine] = field(default_factory=list)

    def report(self) -> dict:
        def line(l):
            return {"rho": l.rho, "theta_deg": math.degrees(l.theta), "votes": l.votes}

        sel = self.selection
        return {
            "image_id": self.warped.image_id,
            "lines": {k: line(getattr(sel, k)) for k in ("top", "bottom", "left", "right")},
            "quad": [list(c) for c in sel.quad.corners],
            "initial_size": list(self.initial_size),
            "output_size": [self.warped.width, self.warped.height],
            "homography": self.homography.to_list(),
            "correction": self.correction.correction,
            "observed_ratio": self.correction.observed_ratio,
            "anchor_bricks": self.correction.anchor_count,
            "scale": self.scale.to_dict(),
        }


def filter_brick_masks(record: ImageRecord, min_bricks: int = MIN_BRICKS) -> list[PolygonMask]:
    """Masks of intact bricks only, in input order."""
    bricks = record.of_label(ClassLabel.BRICK)
    if len(bricks) < min_bricks:
        raise InsufficientBricks(
            f"image {record.image_id}: {len(bricks)} brick instances, need at least {min_bricks}"
        )
    return [p for inst in bricks for p in inst.polygons]


def _farthest(lines: list[PolarLine], intercept) -> tuple[PolarLine, PolarLine]:
    vals = [intercept(l) for l in lines]
    i, j = max(itertools.combinations(range(len(lines)), 2), key=lambda ij: abs(vals[ij[0]] - vals[ij[1]]))
    return (lines[i], lines[j]) if vals[i] <= vals[j] else (lines[j], lines[i])


def select_farthest_pairs(horizontal: list[PolarLine], vertical: list[PolarLine]) -> LinePairSelection:
    """Outermost pair per orientation, compared by axis intercept.

    Horizontal lines are compared by their y-intercept (rho / sin theta),
    vertical ones by their x-intercept (rho / cos theta).
    """
    if len(horizontal) < 2 or len(vertical) < 2:
        raise InsufficientLines(f"need 2+2 lines, got {len(horizontal)} horizontal and {len(vertical)} vertical")
    for l in horizontal:
        assert abs(math.sin(l.theta)) >= INTERCEPT_EPS, "horizontal line without y-intercept"
    for l in vertical:
        assert abs(math.cos(l.theta)) >= INTERCEPT_EPS, "vertical line without x-intercept"
    top, bottom = _farthest(horizontal, PolarLine.y_intercept)
    left, right = _farthest(vertical, PolarLine.x_intercept)
    quad = Quadrilateral(
        (intersect(top, left), intersect(top, right), intersect(bottom, right), intersect(bottom, left))
    )
    return LinePairSelection(top, bottom, left, right, quad)


def initial_rectangle(quad: Quadrilateral) -> tuple[int, int]:
    """Target (width, height): bottom edge and left edge lengths of the quad."""
    w = math.dist(quad.bl, quad.br)
    h = math.dist(quad.tl, quad.bl)
    return max(1, int(math.floor(w + 0.5))), max(1, int(math.floor(h + 0.5)))


def aspect_correct(warped_bricks: list[PolygonMask], spec: BrickSpec, dst: tuple[int, int]) -> AspectCorrection:
    """Vertical stretch that restores the known brick face ratio, and the mm/px scale.

    Only bricks whose bbox width/height lies in [1.5, 6] act as anchors, which
    drops headers, vertically laid units and fragments. Medians throughout.
    """
    _, height = dst
    lo, hi = ANCHOR_RATIO_RANGE
    widths, heights, ratios = [], [], []
    for m in warped_bricks:
        x1, y1, x2, y2 = m.bbox()
        bw, bh = x2 - x1, y2 - y1
        if bh <= 0:
            continue
        r = bw / bh
        if lo <= r <= hi:
            widths.append(bw)
            heights.append(bh)
            ratios.append(r)
    if not ratios:
        raise NoAnchorBricks(f"no warped brick with aspect ratio in [{lo}, {hi}]")
    observed = statistics.median(ratios)
    c = observed / spec.ratio
    corrected = max(1, int(math.floor(height * c + 0.5)))
    scale = PixelScale(
        spec.face_width_mm / statistics.median(widths),
        spec.face_height_mm / (statistics.median(heights) * c),
    )
    if scale.mismatch >= SCALE_AGREEMENT:
        raise ScaleMismatch(f"x/y scale disagree by {100 * scale.mismatch:.2f}% after correction")
    return AspectCorrection(corrected, scale, c, observed, len(ratios))


def warp_record(record: ImageRecord, h: Homography, size: tuple[int, int]) -> ImageRecord:
    """Warp every instance and crop to the ``size`` output frame."""
    w, hh = size
    moved = [Instance(inst.label, tuple(warp_polygon(h, p) for p in inst.polygons), inst.score) for inst in record.instances]
    kept = clip_instances(moved, 0, 0, w, hh)
    return ImageRecord(record.image_id, w, hh, tuple(kept), record.file_name)


def covering_frame(record: ImageRecord, h: Homography, size: tuple[int, int], max_expand: float = MAX_FRAME_EXPAND):
    """Translate-and-grow the output frame so all warped instances stay visible.

    Growth is capped at ``max_expand`` times the frame size on each side.
    Returns the shifted homography and the new frame size.
    """
    w, hh = size
    pts = [h.apply_many(p.as_array()) for inst in record.instances for p in inst.polygons]
    if not pts:
        return h, size
    allp = np.vstack(pts)
    x0 = max(min(0.0, float(allp[:, 0].min())), -max_expand * w)
    y0 = max(min(0.0, float(allp[:, 1].min())), -max_expand * hh)
    x1 = min(max(float(w), float(allp[:, 0].max())), (1 + max_expand) * w)
    y1 = min(max(float(hh), float(allp[:, 1].max())), (1 + max_expand) * hh)
    ox, oy = math.floor(x0), math.floor(y0)
    if ox == 0 and oy == 0 and x1 <= w and y1 <= hh:
        return h, size
    shift = Homography(np.array([[1.0, 0, -ox], [0, 1.0, -oy], [0, 0, 1.0]]))
    return shift @ h, (int(math.ceil(x1)) - ox, int(math.ceil(y1)) - oy)


def detect_lines(record: ImageRecord, cfg: HoughConfig, refine: bool = True):
    """Brick-outline Hough lines ``(horizontal, vertical, edges, cfg, acc)``."""
    bricks = filter_brick_masks(record)
    edges = rasterize_edges(bricks, record.width, record.height)
    cfg = cfg.resolved(edges)
    acc = accumulate(edges, cfg)
    horizontal, vertical = extract_lines(acc, cfg, edges if refine else None)
    return horizontal, vertical, edges, cfg, acc


def rectify_image(
    record: ImageRecord,
    cfg: HoughConfig = HoughConfig(),
    spec: BrickSpec = BrickSpec(),
    refine: bool = True,
    expand_frame: bool = True,
) -> Rectification:
    """Recover the fronto-parallel homography and mm/px scale of one image.

    With ``refine`` each Hough peak is re-fitted to its edge pixels before the
    corners are intersected. With ``expand_frame`` the output frame is
    shifted and grown to keep instances outside the line quad.
    """
    horizontal, vertical, _, _, _ = detect_lines(record, cfg, refine)
    selection = select_farthest_pairs(horizontal, vertical)
    w0, h0 = initial_rectangle(selection.quad)
    h_init = homography_from_quad(selection.quad, w0, h0)
    bricks = filter_brick_masks(record)
    warped_bricks = [warp_polygon(h_init, m) for m in bricks]
    corr = aspect_correct(warped_bricks, spec, (w0, h0))
    h_final = homography_from_quad(selection.quad, w0, corr.corrected_height)
    size = (w0, corr.corrected_height)
    if expand_frame:
        h_final, size = covering_frame(record, h_final, size)
    warped = warp_record(record, h_final, size)
    return Rectification(h_final, corr.scale, warped, selection, corr, (w0, h0), horizontal, vertical)
