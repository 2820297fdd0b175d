"""Instance annotations: types, COCO-style JSON I/O, rasterization, cropping.

Coordinates are pixels with x to the right and y down. A pixel (i, j) covers
[i, i+1) x [j, j+1); fills sample the pixel centre (i + 0.5, j + 0.5), while
edge drawing treats the integer pixel index as the coordinate of a vertex.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import numbers
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import AnnotationError

log = logging.getLogger(__name__)

BOUNDS_TOLERANCE = 0.5
MIN_CROP_PIXELS = 4


class ClassLabel(enum.IntEnum):
    BRICK = 1
    BROKEN_BRICK = 2
    CRACK = 3
    SPALLING = 4
    PLANT = 5

    @property
    def display_name(self) -> str:
        return _DISPLAY[self]

    @classmethod
    def from_name(cls, name: str) -> "ClassLabel":
        key = "".join(ch for ch in str(name).lower() if ch.isalnum())
        try:
            return _BY_KEY[key]
        except KeyError:
            raise AnnotationError(f"unknown category name {name!r}", field="categories") from None


_DISPLAY = {
    ClassLabel.BRICK: "Brick",
    ClassLabel.BROKEN_BRICK: "BrokenBrick",
    ClassLabel.CRACK: "Crack",
    ClassLabel.SPALLING: "Spalling",
    ClassLabel.PLANT: "Plant",
}
_BY_KEY = {name.lower(): label for label, name in _DISPLAY.items()}
# singular/plural variants as written by common annotation tools
_BY_KEY.update({k + "s": v for k, v in list(_BY_KEY.items())})
_BY_KEY["plants"] = ClassLabel.PLANT


@dataclass(frozen=True)
class PolygonMask:
    """Closed polygon; the last vertex connects back to the first."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 3:
            raise AnnotationError(f"polygon needs at least 3 vertices, got {len(verts)}", field="segmentation")
        for x, y in verts:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise AnnotationError("polygon has non-finite coordinate", field="segmentation")
        object.__setattr__(self, "vertices", verts)

    @classmethod
    def from_flat(cls, flat: Sequence[float]) -> "PolygonMask":
        if len(flat) % 2:
            raise AnnotationError("flat polygon has odd number of coordinates", field="segmentation")
        return cls(tuple(zip(flat[0::2], flat[1::2])))

    def flat(self) -> list[float]:
        return [c for xy in self.vertices for c in xy]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    def bbox(self) -> tuple[float, float, float, float]:
        xs = [x for x, _ in self.vertices]
        ys = [y for _, y in self.vertices]
        return (min(xs), min(ys), max(xs), max(ys))

    def signed_area(self) -> float:
        v = self.as_array()
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    def area(self) -> float:
        return abs(self.signed_area())

    def translated(self, dx: float, dy: float) -> "PolygonMask":
        return PolygonMask(tuple((x + dx, y + dy) for x, y in self.vertices))

    def is_simple(self) -> bool:
        """True if no two non-adjacent edges intersect."""
        v = self.vertices
        n = len(v)
        for i in range(n):
            a, b = v[i], v[(i + 1) % n]
            for j in range(i + 2, n):
                if i == 0 and j == n - 1:
                    continue
                if _segments_intersect(a, b, v[j], v[(j + 1) % n]):
                    return False
        return True


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _segments_intersect(p1, p2, q1, q2) -> bool:
    d1, d2 = _orient(q1, q2, p1), _orient(q1, q2, p2)
    d3, d4 = _orient(p1, p2, q1), _orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 and d2 and d3 and d4:
        return True

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    return (
        (d1 == 0 and on_seg(q1, q2, p1))
        or (d2 == 0 and on_seg(q1, q2, p2))
        or (d3 == 0 and on_seg(p1, p2, q1))
        or (d4 == 0 and on_seg(p1, p2, q2))
    )


@dataclass(frozen=True)
class Instance:
    """One segmented object. Multi-part masks are kept as several polygons."""

    label: ClassLabel
    polygons: tuple[PolygonMask, ...]
    score: float | None = None
    bbox: tuple[float, float, float, float] = field(init=False)

    def __post_init__(self):
        polys = tuple(self.polygons)
        if not polys:
            raise AnnotationError("instance has no polygons", field="segmentation")
        object.__setattr__(self, "polygons", polys)
        object.__setattr__(self, "label", ClassLabel(self.label))
        if self.score is not None:
            s = float(self.score)
            if not (0.0 <= s <= 1.0):
                raise AnnotationError(f"score {s} outside [0, 1]", field="score")
            object.__setattr__(self, "score", s)
        boxes = [p.bbox() for p in polys]
        object.__setattr__(
            self,
            "bbox",
            (
                min(b[0] for b in boxes),
                min(b[1] for b in boxes),
                max(b[2] for b in boxes),
                max(b[3] for b in boxes),
            ),
        )

    @property
    def mask(self) -> PolygonMask:
        """The first (usually only) polygon."""
        return self.polygons[0]


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    width: int
    height: int
    instances: tuple[Instance, ...] = ()
    file_name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "image_id", str(self.image_id))
        object.__setattr__(self, "instances", tuple(self.instances))
        for name in ("width", "height"):
            value = getattr(self, name)
            if not isinstance(value, numbers.Real) or isinstance(value, bool) or int(value) != value or value <= 0:
                raise AnnotationError(f"{name} must be a positive integer, got {value!r}", self.image_id, name)
            object.__setattr__(self, name, int(value))
        tol = BOUNDS_TOLERANCE
        for k, inst in enumerate(self.instances):
            x1, y1, x2, y2 = inst.bbox
            if x1 < 0 or y1 < 0 or x2 > self.width + tol or y2 > self.height + tol:
                raise AnnotationError(
                    f"instance {k} bbox {inst.bbox} outside {self.width}x{self.height} image",
                    self.image_id,
                    "segmentation",
                )

    def with_instances(self, instances: Iterable[Instance]) -> "ImageRecord":
        return replace(self, instances=tuple(instances))

    def of_label(self, label: ClassLabel) -> list[Instance]:
        return [inst for inst in self.instances if inst.label == label]


# -- JSON I/O ------------------------------------------------------------------


def parse_dataset(doc: dict, kind: str) -> list[ImageRecord]:
    """Build records from an already-decoded COCO-style document.

    ``kind`` is ``"ground_truth"`` or ``"predictions"``; predictions must
    carry a score on every annotation and ground truth must not.
    """
    if kind not in ("ground_truth", "predictions"):
        raise ValueError(f"kind must be 'ground_truth' or 'predictions', got {kind!r}")
    if not isinstance(doc, dict):
        raise AnnotationError("top level must be a JSON object")
    for key in ("images", "annotations", "categories"):
        if not isinstance(doc.get(key), list):
            raise AnnotationError(f"missing or non-list top-level key {key!r}", field=key)

    categories = {}
    for cat in doc["categories"]:
        try:
            categories[cat["id"]] = ClassLabel.from_name(cat["name"])
        except (KeyError, TypeError):
            raise AnnotationError("category needs 'id' and 'name'", field="categories") from None

    images = {}
    order = []
    for img in doc["images"]:
        try:
            image_id = str(img["id"])
            width, height = img["width"], img["height"]
        except (KeyError, TypeError) as exc:
            raise AnnotationError(f"image entry missing {exc}", field="images") from None
        if image_id in images:
            raise AnnotationError("duplicate image id", image_id, "id")
        images[image_id] = (width, height, img.get("file_name", ""))
        order.append(image_id)

    per_image: dict[str, list[Instance]] = {i: [] for i in order}
    for ann in doc["annotations"]:
        image_id = str(ann.get("image_id"))
        if image_id not in images:
            raise AnnotationError("annotation references unknown image", image_id, "image_id")
        cat_id = ann.get("category_id")
        if cat_id not in categories:
            raise AnnotationError(f"unknown category_id {cat_id!r}", image_id, "category_id")
        seg = ann.get("segmentation")
        if not isinstance(seg, list) or not seg:
            raise AnnotationError("segmentation must be a non-empty list of polygons", image_id, "segmentation")
        if all(isinstance(c, (int, float)) for c in seg):
            seg = [seg]
        try:
            polys = tuple(PolygonMask.from_flat([float(c) for c in part]) for part in seg)
        except AnnotationError as exc:
            raise AnnotationError(str(exc), image_id, "segmentation") from None
        except (TypeError, ValueError):
            raise AnnotationError("segmentation coordinates must be numbers", image_id, "segmentation") from None
        score = ann.get("score")
        if kind == "predictions" and score is None:
            raise AnnotationError("prediction is missing a score", image_id, "score")
        if kind == "ground_truth" and score is not None:
            raise AnnotationError("ground truth must not carry a score", image_id, "score")
        try:
            inst = Instance(categories[cat_id], polys, score)
        except AnnotationError as exc:
            raise AnnotationError(str(exc), image_id, exc.field) from None
        for p in polys:
            if not p.is_simple():
                log.warning("self-intersecting polygon in image %s (annotation %s)", image_id, ann.get("id"))
        per_image[image_id].append(inst)

    for image_id, (width, height, _) in images.items():
        for inst in per_image[image_id]:
            for p in inst.polygons:
                for x, y in p.vertices:
                    if not (0 <= x <= width + BOUNDS_TOLERANCE and 0 <= y <= height + BOUNDS_TOLERANCE):
                        raise AnnotationError(
                            f"vertex ({x}, {y}) outside image bounds", image_id, "segmentation"
                        )
    return [
        ImageRecord(i, images[i][0], images[i][1], tuple(per_image[i]), images[i][2]) for i in order
    ]


def load_dataset(path: str | Path, kind: str) -> list[ImageRecord]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise AnnotationError(f"{path}: invalid JSON: {exc}") from None
    return parse_dataset(doc, kind)


def to_coco(records: Sequence[ImageRecord]) -> dict:
    images, annotations = [], []
    ann_id = 1
    for rec in records:
        images.append(
            {"id": rec.image_id, "file_name": rec.file_name, "width": rec.width, "height": rec.height}
        )
        for inst in rec.instances:
            x1, y1, x2, y2 = inst.bbox
            ann = {
                "id": ann_id,
                "image_id": rec.image_id,
                "category_id": int(inst.label),
                "segmentation": [p.flat() for p in inst.polygons],
                "bbox": [x1, y1, x2 - x1, y2 - y1],
            }
            if inst.score is not None:
                ann["score"] = inst.score
            annotations.append(ann)
            ann_id += 1
    categories = [{"id": int(label), "name": label.display_name} for label in ClassLabel]
    return {"images": images, "annotations": annotations, "categories": categories}


def write_dataset(records: Sequence[ImageRecord], path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_coco(records), indent=1) + "\n", encoding="utf-8")


# -- rasterization ---------------------------------------------------------------


def _scanline_crossings(verts: np.ndarray, yc: np.ndarray) -> list[np.ndarray]:
    x0, y0 = verts[:, 0], verts[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    # half-open rule: an edge spans row centre yc iff exactly one endpoint is above it
    spans = (y0[None, :] > yc[:, None]) != (y1[None, :] > yc[:, None])
    out = []
    for r in range(len(yc)):
        e = spans[r]
        if not e.any():
            out.append(np.empty(0))
            continue
        xs = x0[e] + (yc[r] - y0[e]) * (x1[e] - x0[e]) / (y1[e] - y0[e])
        out.append(np.sort(xs))
    return out


def rasterize_fill(mask: PolygonMask | Sequence[PolygonMask], width: int, height: int) -> np.ndarray:
    """Even-odd scanline fill sampled at pixel centres.

    Returns a ``(height, width)`` boolean grid. Several polygons are OR-ed
    together (each one filled even-odd on its own).
    """
    grid = np.zeros((height, width), dtype=bool)
    masks = [mask] if isinstance(mask, PolygonMask) else list(mask)
    xc = np.arange(width) + 0.5
    for m in masks:
        verts = m.as_array()
        ymin, ymax = verts[:, 1].min(), verts[:, 1].max()
        r0 = max(0, int(math.floor(ymin - 0.5)))
        r1 = min(height, int(math.ceil(ymax + 0.5)))
        if r1 <= r0:
            continue
        rows = np.arange(r0, r1)
        for r, xs in zip(rows, _scanline_crossings(verts, rows + 0.5)):
            if xs.size < 2:
                continue
            # number of crossings strictly right of each centre
            right = xs.size - np.searchsorted(xs, xc, side="right")
            grid[r] |= (right % 2).astype(bool)
    return grid


def bresenham(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """8-connected integer line from (x0, y0) to (x1, y1), endpoints included."""
    points = []
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        points.append((x0, y0))
        if x0 == x1 and y0 == y1:
            return points
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def rasterize_edges(masks: Iterable[PolygonMask], width: int, height: int) -> np.ndarray:
    """Draw every polygon edge as a 1-px Bresenham line; union over masks."""
    grid = np.zeros((height, width), dtype=bool)
    for m in masks:
        pts = [(_round_half_up(x), _round_half_up(y)) for x, y in m.vertices]
        for (ax, ay), (bx, by) in zip(pts, pts[1:] + pts[:1]):
            line = np.asarray(bresenham(ax, ay, bx, by))
            ok = (line[:, 0] >= 0) & (line[:, 0] < width) & (line[:, 1] >= 0) & (line[:, 1] < height)
            grid[line[ok, 1], line[ok, 0]] = True
    return grid


# -- clipping and cropping ---------------------------------------------------------


def clip_polygon_to_rect(mask: PolygonMask, x0: float, y0: float, x1: float, y1: float) -> PolygonMask | None:
    """Sutherland-Hodgman clip against an axis-aligned rectangle.

    Returns None when nothing of positive area survives.
    """
    pts = list(mask.vertices)

    def clip(points, inside, cross):
        out = []
        for i, cur in enumerate(points):
            prev = points[i - 1]
            if inside(cur):
                if not inside(prev):
                    out.append(cross(prev, cur))
                out.append(cur)
            elif inside(prev):
                out.append(cross(prev, cur))
        return out

    def at_x(xv):
        return lambda p, q: (xv, p[1] + (q[1] - p[1]) * (xv - p[0]) / (q[0] - p[0]))

    def at_y(yv):
        return lambda p, q: (p[0] + (q[0] - p[0]) * (yv - p[1]) / (q[1] - p[1]), yv)

    for inside, cross in (
        (lambda p: p[0] >= x0, at_x(x0)),
        (lambda p: p[0] <= x1, at_x(x1)),
        (lambda p: p[1] >= y0, at_y(y0)),
        (lambda p: p[1] <= y1, at_y(y1)),
    ):
        pts = clip(pts, inside, cross)
        if not pts:
            return None
    deduped = [p for i, p in enumerate(pts) if p != pts[i - 1]] if len(pts) > 1 else pts
    if len(deduped) < 3:
        return None
    clipped = PolygonMask(tuple(deduped))
    if clipped.area() <= 0.0:
        return None
    return clipped


def clip_instances(
    instances: Iterable[Instance], x0: float, y0: float, x1: float, y1: float, min_pixels: int = 0
) -> list[Instance]:
    """Clip instances to a window and re-origin them at its top-left corner."""
    w = int(round(x1 - x0))
    h = int(round(y1 - y0))
    kept = []
    for inst in instances:
        parts = []
        for poly in inst.polygons:
            c = clip_polygon_to_rect(poly, x0, y0, x1, y1)
            if c is not None:
                parts.append(c.translated(-x0, -y0))
        if not parts:
            continue
        if min_pixels and int(rasterize_fill(parts, w, h).sum()) < min_pixels:
            continue
        kept.append(Instance(inst.label, tuple(parts), inst.score))
    return kept


def clip_record(record: ImageRecord, x0: float, y0: float, x1: float, y1: float, min_pixels: int = 0) -> ImageRecord:
    kept = clip_instances(record.instances, x0, y0, x1, y1, min_pixels)
    return ImageRecord(record.image_id, int(round(x1 - x0)), int(round(y1 - y0)), tuple(kept), record.file_name)


def grid_crop(record: ImageRecord, rows: int, cols: int) -> list[ImageRecord]:
    """Split a record into rows x cols cells, row-major from the top-left.

    Cells use floor-divided sizes; the last row and column absorb the
    remainder. Cell ids are ``"<id>_<row>_<col>"`` with 1-based indices.
    Instances whose clipped fill covers fewer than 4 pixels are dropped.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    if rows == 1 and cols == 1:
        return [record]
    cw, ch = record.width // cols, record.height // rows
    if cw < 1 or ch < 1:
        raise ValueError(f"{record.width}x{record.height} image too small for {rows}x{cols} grid")
    out = []
    for r in range(rows):
        y0 = r * ch
        y1 = record.height if r == rows - 1 else y0 + ch
        for c in range(cols):
            x0 = c * cw
            x1 = record.width if c == cols - 1 else x0 + cw
            cell = clip_record(record, x0, y0, x1, y1, min_pixels=MIN_CROP_PIXELS)
            out.append(replace(cell, image_id=f"{record.image_id}_{r + 1:02d}_{c + 1:02d}"))
    return out
