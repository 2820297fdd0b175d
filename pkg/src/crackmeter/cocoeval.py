"""COCO-protocol box and mask AP for polygon instance segmentation.

Only the headline numbers are produced: AP averaged over IoU thresholds
0.50:0.05:0.95, AP at 0.50 and AP at 0.75, per category and averaged over the
categories that have ground truth. There is no area-range split, no
max-detection cap and no crowd handling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .annotations import ClassLabel, ImageRecord, Instance, rasterize_fill
from .errors import AlignmentError

KINDS = ("box", "mask")
DEFAULT_THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))
DEFAULT_RECALLS = tuple(k / 100 for k in range(101))


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    recall_levels: tuple[float, ...] = DEFAULT_RECALLS
    iou_kind: str = "mask"

    def __post_init__(self):
        t = self.iou_thresholds
        if not t or any(not (0 < v <= 1) for v in t) or any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("IoU thresholds must be strictly increasing in (0, 1]")
        if len(self.recall_levels) != 101:
            raise ValueError("exactly 101 recall levels are required")
        if self.iou_kind not in KINDS:
            raise ValueError(f"iou_kind must be one of {KINDS}")

    def threshold_index(self, value: float) -> int:
        for i, t in enumerate(self.iou_thresholds):
            if abs(t - value) < 1e-9:
                return i
        raise KeyError(value)


# -- IoU -------------------------------------------------------------------------


def box_iou(a, b) -> float:
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    inter = max(0.0, ix) * max(0.0, iy)
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


@dataclass(frozen=True, eq=False)
class _Raster:
    """Filled mask cropped to its bbox window, with the window origin."""

    x0: int
    y0: int
    grid: np.ndarray
    area: int


def _raster(inst: Instance, width: int, height: int) -> _Raster:
    x1, y1, x2, y2 = inst.bbox
    x0 = max(0, int(math.floor(x1)))
    y0 = max(0, int(math.floor(y1)))
    xe = max(x0, min(width, int(math.ceil(x2)) + 1))
    ye = max(y0, min(height, int(math.ceil(y2)) + 1))
    if xe == x0 or ye == y0:
        return _Raster(x0, y0, np.zeros((0, 0), dtype=bool), 0)
    grid = rasterize_fill([p.translated(-x0, -y0) for p in inst.polygons], xe - x0, ye - y0)
    return _Raster(x0, y0, grid, int(grid.sum()))


def _raster_iou(a: _Raster, b: _Raster) -> float:
    union_guess = a.area + b.area
    if union_guess == 0:
        return 0.0
    ax1, ay1 = a.x0 + a.grid.shape[1], a.y0 + a.grid.shape[0]
    bx1, by1 = b.x0 + b.grid.shape[1], b.y0 + b.grid.shape[0]
    x0, y0 = max(a.x0, b.x0), max(a.y0, b.y0)
    x1, y1 = min(ax1, bx1), min(ay1, by1)
    inter = 0
    if x1 > x0 and y1 > y0:
        sa = a.grid[y0 - a.y0 : y1 - a.y0, x0 - a.x0 : x1 - a.x0]
        sb = b.grid[y0 - b.y0 : y1 - b.y0, x0 - b.x0 : x1 - b.x0]
        inter = int(np.count_nonzero(sa & sb))
    return inter / (union_guess - inter)


def iou(a: Instance, b: Instance, kind: str = "box", width: int | None = None, height: int | None = None) -> float:
    """Box or mask IoU; mask IoU needs the image size to rasterize at."""
    if kind == "box":
        return box_iou(a.bbox, b.bbox)
    if kind != "mask":
        raise ValueError(f"unknown IoU kind {kind!r}")
    if width is None or height is None:
        raise ValueError("mask IoU needs the image width and height")
    return _raster_iou(_raster(a, width, height), _raster(b, width, height))


def iou_matrix(preds: Sequence[Instance], gts: Sequence[Instance], kind: str, width: int, height: int) -> np.ndarray:
    out = np.zeros((len(preds), len(gts)))
    if not len(preds) or not len(gts):
        return out
    if kind == "box":
        for i, p in enumerate(preds):
            for j, g in enumerate(gts):
                out[i, j] = box_iou(p.bbox, g.bbox)
        return out
    pr = [_raster(p, width, height) for p in preds]
    gr = [_raster(g, width, height) for g in gts]
    for i, a in enumerate(pr):
        for j, b in enumerate(gr):
            out[i, j] = _raster_iou(a, b)
    return out


# -- matching and AP ---------------------------------------------------------------


def prediction_order(scores: Sequence[float]) -> list[int]:
    """Descending score, ties by ascending index."""
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))


def greedy_assign(ious: np.ndarray, threshold: float) -> list[int]:
    """Greedy matching on an IoU table whose rows are already in score order.

    Each row takes the still-free column with the largest IoU >= threshold
    (lowest column on ties); -1 marks an unmatched prediction.
    """
    n_pred, n_gt = ious.shape
    taken = np.zeros(n_gt, dtype=bool)
    out = []
    for i in range(n_pred):
        best, best_iou = -1, -1.0
        for j in range(n_gt):
            if taken[j] or ious[i, j] < threshold:
                continue
            if ious[i, j] > best_iou:
                best, best_iou = j, ious[i, j]
        if best >= 0:
            taken[best] = True
        out.append(best)
    return out


@dataclass(frozen=True)
class MatchResult:
    """``pred_to_gt[k]`` is the GT index for prediction ``order[k]`` or -1."""

    order: tuple[int, ...]
    pred_to_gt: tuple[int, ...]
    unmatched_gt: tuple[int, ...]

    @property
    def tp(self) -> int:
        return sum(1 for g in self.pred_to_gt if g >= 0)

    @property
    def fp(self) -> int:
        return sum(1 for g in self.pred_to_gt if g < 0)

    @property
    def fn(self) -> int:
        return len(self.unmatched_gt)


def match_greedy(
    preds: Sequence[Instance],
    gts: Sequence[Instance],
    threshold: float,
    kind: str = "box",
    width: int | None = None,
    height: int | None = None,
    ious: np.ndarray | None = None,
) -> MatchResult:
    """Match one image's same-category predictions to ground truth."""
    order = prediction_order([p.score for p in preds])
    if ious is None:
        if kind == "mask" and (width is None or height is None):
            raise ValueError("mask matching needs the image size")
        ious = iou_matrix(preds, gts, kind, width or 0, height or 0)
    assigned = greedy_assign(ious[order, :] if len(order) else ious, threshold)
    used = {g for g in assigned if g >= 0}
    return MatchResult(tuple(order), tuple(assigned), tuple(j for j in range(len(gts)) if j not in used))


@dataclass(frozen=True)
class PRCurve:
    recall_levels: tuple[float, ...]
    precision: tuple[float, ...]

    @property
    def ap(self) -> float:
        return float(np.mean(self.precision))


def pr_curve(is_tp: Sequence[bool], n_gt: int, recall_levels: Sequence[float] = DEFAULT_RECALLS) -> PRCurve:
    """Interpolated precision at each recall level.

    ``is_tp`` must already be in descending-score order across the whole
    dataset. The interpolated precision at r is the best precision reached at
    any recall >= r, or 0 when recall r is never reached.
    """
    if n_gt <= 0:
        raise ValueError("PR curve undefined without ground truth")
    flags = np.asarray(is_tp, dtype=bool)
    if flags.size == 0:
        return PRCurve(tuple(recall_levels), tuple(0.0 for _ in recall_levels))
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    recall = tp / n_gt
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, np.asarray(recall_levels), side="left")
    q = np.where(idx < len(recall), envelope[np.minimum(idx, len(recall) - 1)], 0.0)
    return PRCurve(tuple(recall_levels), tuple(float(v) for v in q))


def average_precision(is_tp: Sequence[bool], n_gt: int, recall_levels: Sequence[float] = DEFAULT_RECALLS) -> float | None:
    """Mean interpolated precision over the recall levels; None without GT."""
    if n_gt <= 0:
        return None
    return pr_curve(is_tp, n_gt, recall_levels).ap


# -- dataset evaluation ----------------------------------------------------------------


def _canonical_key(inst: Instance):
    return (-inst.score, int(inst.label), inst.bbox, tuple(p.vertices for p in inst.polygons))


@dataclass
class APReport:
    """Per-category and category-mean AP for both IoU kinds.

    ``metrics[name]`` maps ``ap_box``, ``ap_box_50`` ... ``ap_mask_75`` to
    values; ``counts[kind][name]`` lists TP/FP/FN per IoU threshold;
    ``curves`` keeps the interpolated PR curve per (kind, name, threshold).
    """

    metrics: dict[str, dict[str, float]]
    mean: dict[str, float]
    counts: dict[str, dict[str, list[dict]]]
    thresholds: tuple[float, ...]
    curves: dict[tuple[str, str, float], PRCurve] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        doc = {name: dict(v) for name, v in self.metrics.items()}
        doc["all"] = dict(self.mean)
        doc["counts"] = self.counts
        doc["iou_thresholds"] = list(self.thresholds)
        return doc


def _column(kind: str, suffix: str = "") -> str:
    return f"ap_{kind}{suffix}"


def evaluate(gt: Sequence[ImageRecord], preds: Sequence[ImageRecord], cfg: EvalConfig = EvalConfig()) -> APReport:
    gt_by_id = {r.image_id: r for r in gt}
    pred_by_id = {r.image_id: r for r in preds}
    if set(gt_by_id) != set(pred_by_id):
        missing = sorted(set(gt_by_id) ^ set(pred_by_id))
        raise AlignmentError(f"image ids differ between GT and predictions: {missing[:5]}")
    for image_id, g in gt_by_id.items():
        p = pred_by_id[image_id]
        if (g.width, g.height) != (p.width, p.height):
            raise AlignmentError(f"image {image_id}: size {g.width}x{g.height} vs {p.width}x{p.height}")
        if any(inst.score is None for inst in p.instances):
            raise AlignmentError(f"image {image_id}: prediction without score")

    labels = sorted({inst.label for r in gt for inst in r.instances})
    image_ids = sorted(gt_by_id)
    thresholds = cfg.iou_thresholds
    metrics: dict[str, dict[str, float]] = {}
    counts: dict[str, dict[str, list[dict]]] = {k: {} for k in KINDS}
    curves = {}
    per_label_aps: dict[str, dict[ClassLabel, list[float]]] = {k: {} for k in KINDS}

    for kind in KINDS:
        for label in labels:
            # flags[t] collects (score, image rank, prediction rank, is_tp)
            flags: list[list[tuple]] = [[] for _ in thresholds]
            tallies = [[0, 0, 0] for _ in thresholds]
            n_gt = 0
            for rank, image_id in enumerate(image_ids):
                g_rec, p_rec = gt_by_id[image_id], pred_by_id[image_id]
                g_inst = g_rec.of_label(label)
                p_inst = sorted(p_rec.of_label(label), key=_canonical_key)
                n_gt += len(g_inst)
                ious = iou_matrix(p_inst, g_inst, kind, g_rec.width, g_rec.height)
                for t, thr in enumerate(thresholds):
                    res = match_greedy(p_inst, g_inst, thr, ious=ious)
                    for k, (i, g) in enumerate(zip(res.order, res.pred_to_gt)):
                        flags[t].append((-p_inst[i].score, rank, k, g >= 0))
                    tallies[t][0] += res.tp
                    tallies[t][1] += res.fp
                    tallies[t][2] += res.fn
            aps = []
            for t, thr in enumerate(thresholds):
                ordered = [f[3] for f in sorted(flags[t])]
                curve = pr_curve(ordered, n_gt, cfg.recall_levels)
                curves[(kind, label.display_name, thr)] = curve
                aps.append(curve.ap)
            per_label_aps[kind][label] = aps
            counts[kind][label.display_name] = [
                {"iou": thr, "tp": tp, "fp": fp, "fn": fn} for thr, (tp, fp, fn) in zip(thresholds, tallies)
            ]

    def pick(aps, value):
        try:
            return aps[cfg.threshold_index(value)]
        except KeyError:
            return None

    for label in labels:
        row = {}
        for kind in KINDS:
            aps = per_label_aps[kind][label]
            row[_column(kind)] = float(np.mean(aps))
            row[_column(kind, "_50")] = pick(aps, 0.5)
            row[_column(kind, "_75")] = pick(aps, 0.75)
        metrics[label.display_name] = row

    mean = {}
    columns = [_column(k, s) for k in KINDS for s in ("", "_50", "_75")]
    for col in columns:
        vals = [metrics[l.display_name][col] for l in labels if metrics[l.display_name][col] is not None]
        mean[col] = float(np.mean(vals)) if vals else None
    return APReport(metrics, mean, counts, thresholds, curves)
