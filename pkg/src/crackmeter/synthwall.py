"""Synthetic running-bond brick walls with exact ground truth.

Walls are laid out in millimetres (x right, y down, origin at the wall's
top-left corner), scaled into a fronto-parallel pixel frame, optionally
warped by a homography and jittered to mimic segmentation boundary noise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .annotations import ClassLabel, ImageRecord, Instance, PolygonMask, clip_polygon_to_rect, write_dataset
from .errors import DegenerateQuad, OutOfBounds
from .geometry import Homography, Quadrilateral, homography_from_points
from .measure import CrackMeasurement
from .rectify import BrickSpec, PixelScale


@dataclass(frozen=True)
class CrackSpec:
    """Polyline in wall millimetres thickened to ``opening_mm``."""

    vertices: tuple[tuple[float, float], ...]
    opening_mm: float

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple((float(x), float(y)) for x, y in self.vertices))
        if len(self.vertices) < 2:
            raise ValueError("crack polyline needs at least 2 vertices")
        if not self.opening_mm > 0:
            raise ValueError("crack opening must be positive")


@dataclass(frozen=True)
class WallSpec:
    brick: BrickSpec = BrickSpec()
    mortar_mm: float = 10.0
    rows: int = 12
    cols: int = 6
    bond: str = "running"
    ends: str = "flush"
    mm_per_px: float = 2.0
    crack: CrackSpec | None = None
    distortion: Homography | None = None
    noise: float = 0.5
    seed: int = 0
    margin_px: float = 8.0
    image_id: str | None = None

    def __post_init__(self):
        if self.bond != "running":
            raise ValueError(f"only running bond is supported, got {self.bond!r}")
        if self.ends not in ("flush", "toothed"):
            raise ValueError(f"ends must be 'flush' or 'toothed', got {self.ends!r}")
        if self.rows < 1 or self.cols < 2:
            raise ValueError("need rows >= 1 and cols >= 2")
        if self.mortar_mm < 0 or not self.mm_per_px > 0 or self.noise < 0 or self.margin_px < 0:
            raise ValueError("mortar, noise and margin must be >= 0 and mm_per_px > 0")

    @property
    def wall_size_mm(self) -> tuple[float, float]:
        m = self.mortar_mm
        unit = self.brick.face_width_mm + m
        overhang = unit / 2 if self.ends == "toothed" and self.rows > 1 else 0.0
        return (
            self.cols * unit - m + overhang,
            self.rows * (self.brick.face_height_mm + m) - m,
        )

    @property
    def fronto_size_px(self) -> tuple[float, float]:
        w, h = self.wall_size_mm
        return (w / self.mm_per_px + 2 * self.margin_px, h / self.mm_per_px + 2 * self.margin_px)

    @classmethod
    def from_dict(cls, doc: dict) -> "WallSpec":
        doc = dict(doc)
        if "brick" in doc:
            doc["brick"] = BrickSpec(**doc["brick"])
        if doc.get("crack") is not None:
            c = doc["crack"]
            doc["crack"] = CrackSpec(tuple(map(tuple, c["vertices"])), c["opening_mm"])
        if doc.get("distortion") is not None:
            doc["distortion"] = Homography.from_list(doc["distortion"])
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown wall spec fields: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return {
            "brick": {"face_width_mm": self.brick.face_width_mm, "face_height_mm": self.brick.face_height_mm},
            "mortar_mm": self.mortar_mm,
            "rows": self.rows,
            "cols": self.cols,
            "bond": self.bond,
            "ends": self.ends,
            "mm_per_px": self.mm_per_px,
            "crack": None
            if self.crack is None
            else {"vertices": [list(v) for v in self.crack.vertices], "opening_mm": self.crack.opening_mm},
            "distortion": None if self.distortion is None else self.distortion.to_list(),
            "noise": self.noise,
            "seed": self.seed,
            "margin_px": self.margin_px,
            "image_id": self.image_id,
        }


@dataclass(frozen=True)
class WallTruth:
    homography: Homography
    mm_per_px_x: float
    mm_per_px_y: float
    crack_total_width_mm: float | None = None
    crack_total_height_mm: float | None = None
    crack_max_transverse_width_mm: float | None = None
    brick_count: int = 0

    def to_dict(self) -> dict:
        return {
            "homography": self.homography.to_list(),
            "mm_per_px_x": self.mm_per_px_x,
            "mm_per_px_y": self.mm_per_px_y,
            "crack": None
            if self.crack_total_width_mm is None
            else {
                "total_width_mm": self.crack_total_width_mm,
                "total_height_mm": self.crack_total_height_mm,
                "max_transverse_width_mm": self.crack_max_transverse_width_mm,
            },
            "brick_count": self.brick_count,
        }


# -- layout ------------------------------------------------------------------------


def brick_rects(spec: WallSpec) -> list[tuple[float, float, float, float]]:
    """Running bond: odd courses shift by half a unit.

    With flush ends the shifted courses drop both end half bricks; with
    toothed ends they keep every unit and overhang on the right.
    """
    w, h, m = spec.brick.face_width_mm, spec.brick.face_height_mm, spec.mortar_mm
    per_odd = spec.cols if spec.ends == "toothed" else spec.cols - 1
    rects = []
    for r in range(spec.rows):
        y = r * (h + m)
        if r % 2 == 0:
            xs = [k * (w + m) for k in range(spec.cols)]
        else:
            xs = [(w + m) / 2 + k * (w + m) for k in range(per_odd)]
        rects.extend((x, y, x + w, y + h) for x in xs)
    return rects


def expected_brick_count(rows: int, cols: int, ends: str = "flush") -> int:
    return rows * cols if ends == "toothed" else rows * cols - rows // 2


def thicken_polyline(vertices, width: float) -> PolygonMask:
    """Outline of a polyline swept by a segment of ``width``, mitred joins, flat caps."""
    p = np.asarray(vertices, dtype=float)
    d = np.diff(p, axis=0)
    lengths = np.hypot(d[:, 0], d[:, 1])
    if np.any(lengths == 0):
        raise ValueError("crack polyline has repeated vertices")
    d /= lengths[:, None]
    n = np.column_stack([-d[:, 1], d[:, 0]])
    half = width / 2
    offsets = [n[0] * half]
    for i in range(1, len(p) - 1):
        mid = n[i - 1] + n[i]
        norm = np.hypot(*mid)
        if norm < 1e-9:
            raise ValueError("crack polyline folds back on itself")
        mid /= norm
        offsets.append(mid * half / float(mid @ n[i]))
    offsets.append(n[-1] * half)
    off = np.asarray(offsets)
    left = p + off
    right = (p - off)[::-1]
    return PolygonMask(tuple(map(tuple, np.vstack([left, right]))))


def max_chord_width(mask: PolygonMask) -> float:
    """Largest horizontal extent (rightmost minus leftmost crossing) over all y."""
    v = mask.as_array()
    x0, y0 = v[:, 0], v[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    levels = np.unique(y0)
    span = levels[-1] - levels[0]
    eps = 1e-9 * max(1.0, span)
    best = 0.0
    # the extent is convex in y between consecutive vertex heights
    for lo, hi in zip(levels, levels[1:]):
        for y in (lo + eps, hi - eps):
            e = (y0 > y) != (y1 > y)
            if not e.any():
                continue
            xs = x0[e] + (y - y0[e]) * (x1[e] - x0[e]) / (y1[e] - y0[e])
            best = max(best, float(xs.max() - xs.min()))
    return best


def random_distortion(width: float, height: float, fraction: float, rng: np.random.Generator) -> Homography:
    """Homography moving each image corner by at most ``fraction * min(width, height)``."""
    corners = np.array([(0, 0), (width, 0), (width, height), (0, height)], dtype=float)
    radius = fraction * min(width, height)
    for _ in range(1000):
        ang = rng.uniform(0, 2 * math.pi, 4)
        rad = radius * np.sqrt(rng.uniform(0, 1, 4))
        moved = corners + np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
        try:
            Quadrilateral(tuple(map(tuple, moved)))
        except DegenerateQuad:
            continue
        return homography_from_points(corners, moved)
    raise RuntimeError("could not draw a convex distortion")


def random_step_crack(spec: WallSpec, rng: np.random.Generator, steps: int | None = None) -> CrackSpec:
    """Stair-step crack alternating half-unit horizontal runs and course drops.

    Starts and ends on horizontal runs and keeps one brick of clearance from
    the wall border so the outermost courses and columns stay intact.
    """
    w, h, m = spec.brick.face_width_mm, spec.brick.face_height_mm, spec.mortar_mm
    wall_w, _ = spec.wall_size_mm
    course = h + m
    # drops are 0.9-1.1 courses; one course of clearance (+0.2 slack) top and bottom
    max_drop = max(1, int((spec.rows - 3) / 1.1))
    n_drop = steps if steps is not None else int(rng.integers(2, max(3, max_drop + 1)))
    n_drop = max(1, min(n_drop, max_drop))
    run = (w + m) / 2 * rng.uniform(0.6, 1.0)
    direction = 1 if rng.uniform() < 0.5 else -1
    lo_x, hi_x = w + m, wall_w - (w + m)
    if run * (n_drop + 1) > 0.9 * (hi_x - lo_x):
        run = 0.9 * (hi_x - lo_x) / (n_drop + 1)
    total_run = run * (n_drop + 1)
    x = rng.uniform(lo_x, hi_x - total_run) if direction > 0 else rng.uniform(lo_x + total_run, hi_x)
    y = course * rng.uniform(1.2, max(1.2, spec.rows - 1.8 - 1.1 * n_drop))
    pts = [(x, y)]
    for i in range(n_drop + 1):
        x += direction * run
        pts.append((x, y))
        if i < n_drop:
            y += course * rng.uniform(0.9, 1.1)
            pts.append((x, y))
    opening = rng.uniform(4.0, 15.0)
    return CrackSpec(tuple(pts), opening)


# -- generation --------------------------------------------------------------------------


def _rect_polygon(x1, y1, x2, y2) -> PolygonMask:
    return PolygonMask(((x1, y1), (x2, y1), (x2, y2), (x1, y2)))


def generate(spec: WallSpec) -> tuple[ImageRecord, ImageRecord, WallTruth]:
    """Build (ground truth, perfect predictions, truth) for one wall."""
    wall_w, wall_h = spec.wall_size_mm
    crack_mm = None
    if spec.crack is not None:
        crack_mm = thicken_polyline(spec.crack.vertices, spec.crack.opening_mm)
        x1, y1, x2, y2 = crack_mm.bbox()
        if x1 < 0 or y1 < 0 or x2 > wall_w or y2 > wall_h:
            raise OutOfBounds(f"crack bbox {crack_mm.bbox()} leaves the {wall_w}x{wall_h} mm wall")

    shapes: list[tuple[ClassLabel, PolygonMask]] = []
    for rect in brick_rects(spec):
        broken = crack_mm is not None and clip_polygon_to_rect(crack_mm, *rect) is not None
        shapes.append((ClassLabel.BROKEN_BRICK if broken else ClassLabel.BRICK, _rect_polygon(*rect)))
    if crack_mm is not None:
        shapes.append((ClassLabel.CRACK, crack_mm))

    s, margin = spec.mm_per_px, spec.margin_px
    to_px = np.array([[1 / s, 0, margin], [0, 1 / s, margin], [0, 0, 1.0]])
    g0 = spec.distortion.matrix if spec.distortion is not None else np.eye(3)

    def project(m, pts):
        hom = np.column_stack([pts, np.ones(len(pts))]) @ m.T
        return hom[:, :2] / hom[:, 2:3]

    wall_box = np.array([(0, 0), (wall_w, 0), (wall_w, wall_h), (0, wall_h)], dtype=float)
    corners = project(g0 @ to_px, wall_box)
    shift = np.eye(3)
    shift[:2, 2] = margin - corners.min(axis=0)
    g = Homography(shift @ g0)
    full = g.matrix @ to_px
    width = int(math.ceil(project(full, wall_box)[:, 0].max() + margin))
    height = int(math.ceil(project(full, wall_box)[:, 1].max() + margin))

    rng = np.random.default_rng(spec.seed)
    gt_inst, pred_inst = [], []
    for label, poly in shapes:
        pts = project(full, poly.as_array())
        if spec.noise > 0:
            pts = pts + rng.normal(0.0, spec.noise, pts.shape)
        pts[:, 0] = np.clip(pts[:, 0], 0, width)
        pts[:, 1] = np.clip(pts[:, 1], 0, height)
        mask = PolygonMask(tuple(map(tuple, pts)))
        gt_inst.append(Instance(label, (mask,)))
        pred_inst.append(Instance(label, (mask,), 1.0))

    image_id = spec.image_id or f"synth_{spec.seed}"
    gt = ImageRecord(image_id, width, height, tuple(gt_inst))
    pred = ImageRecord(image_id, width, height, tuple(pred_inst))
    truth = WallTruth(g, s, s, brick_count=len(shapes) - (crack_mm is not None))
    if crack_mm is not None:
        x1, y1, x2, y2 = crack_mm.bbox()
        truth = WallTruth(g, s, s, x2 - x1, y2 - y1, max_chord_width(crack_mm), truth.brick_count)
    return gt, pred, truth


def save_outputs(gt: ImageRecord, pred: ImageRecord, truth: WallTruth, gt_path, pred_path, truth_path) -> None:
    write_dataset([gt], gt_path)
    write_dataset([pred], pred_path)
    Path(truth_path).write_text(json.dumps(truth.to_dict(), indent=1) + "\n", encoding="utf-8")


# -- oracle --------------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleResult:
    passed: bool
    deltas: dict[str, float] = field(default_factory=dict)
    tolerances: dict[str, float] = field(default_factory=dict)


def oracle_check(
    truth: WallTruth,
    measurement: CrackMeasurement | None = None,
    scale: PixelScale | None = None,
    tolerance: float = 0.10,
    scale_tolerance: float | None = None,
) -> OracleResult:
    """Relative deltas of the recovered quantities against the generator truth.

    Crack metrics are checked at ``tolerance``; the pixel scale only when a
    ``scale_tolerance`` is given (it is frame-dependent under perspective).
    """
    deltas, tols = {}, {}
    if measurement is not None and truth.crack_total_width_mm is not None:
        for name, ref in (
            ("total_width", truth.crack_total_width_mm),
            ("total_height", truth.crack_total_height_mm),
            ("max_transverse_width", truth.crack_max_transverse_width_mm),
        ):
            deltas[name] = abs(measurement.mm(name, rounded=False) - ref) / ref
            tols[name] = tolerance
    if scale is not None:
        deltas["mm_per_px_x"] = abs(scale.mm_per_px_x - truth.mm_per_px_x) / truth.mm_per_px_x
        deltas["mm_per_px_y"] = abs(scale.mm_per_px_y - truth.mm_per_px_y) / truth.mm_per_px_y
        if scale_tolerance is not None:
            tols["mm_per_px_x"] = tols["mm_per_px_y"] = scale_tolerance
    passed = all(deltas[k] <= t for k, t in tols.items())
    return OracleResult(passed, deltas, tols)


def random_scene(index: int, max_fraction: float = 0.3, n_scenes: int = 50, seed_base: int = 2024) -> WallSpec:
    """Scene ``index`` of a seeded benchmark family.

    Distortion grows linearly with the index up to ``max_fraction``; courses,
    columns, base scale and the stair crack are drawn from the seed.
    """
    rng = np.random.default_rng([seed_base, index])
    fraction = max_fraction * (index + 1) / n_scenes
    base = WallSpec(
        rows=int(rng.integers(10, 15)),
        cols=int(rng.integers(5, 8)),
        mm_per_px=float(rng.uniform(1.6, 2.4)),
        seed=index,
    )
    w, h = base.fronto_size_px
    g = random_distortion(w, h, fraction, rng) if fraction > 0 else None
    return replace(base, crack=random_step_crack(base, rng), distortion=g, image_id=f"scene_{index:03d}")


def scene_fraction(index: int, max_fraction: float = 0.3, n_scenes: int = 50) -> float:
    return max_fraction * (index + 1) / n_scenes
