"""Vote-accumulation Hough line transform with per-orientation thresholds."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import PolarLine

_THETA_CHUNK = 128


@dataclass(frozen=True)
class HoughConfig:
    """Accumulator resolution and peak-picking parameters.

    Thresholds left as None are filled from :func:`default_thresholds`.
    """

    theta_step: float = math.pi / 180
    rho_step: float = 1.0
    threshold_vertical: int | None = None
    threshold_horizontal: int | None = None
    nms_window: tuple[int, int] = (2, 2)
    max_lines_per_class: int = 32
    threshold_fraction: float = 0.25

    def __post_init__(self):
        if not (self.theta_step > 0 and self.rho_step > 0):
            raise ValueError("theta_step and rho_step must be positive")
        for name in ("threshold_vertical", "threshold_horizontal"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be >= 1")
        tv, th = self.threshold_vertical, self.threshold_horizontal
        if tv is not None and th is not None and th < tv:
            raise ValueError("threshold_horizontal must be >= threshold_vertical")
        if not self.threshold_fraction > 0:
            raise ValueError("threshold_fraction must be positive")
        if min(self.nms_window) < 0 or self.max_lines_per_class < 1:
            raise ValueError("nms_window must be >= 0 and max_lines_per_class >= 1")

    def resolved(self, edges: np.ndarray) -> "HoughConfig":
        """Copy with any missing threshold filled from the edge grid."""
        if self.threshold_vertical is not None and self.threshold_horizontal is not None:
            return self
        tv, th = default_thresholds(edges, self.threshold_fraction)
        tv = self.threshold_vertical if self.threshold_vertical is not None else tv
        th = self.threshold_horizontal if self.threshold_horizontal is not None else max(th, tv)
        return replace(self, threshold_vertical=tv, threshold_horizontal=th)


@dataclass(frozen=True, eq=False)
class HoughAccumulator:
    """Vote grid indexed ``votes[rho_index, theta_index]``.

    Row ``rho_offset`` holds rho == 0; rho spans [-D, D] with D the image
    diagonal rounded up to whole bins.
    """

    votes: np.ndarray
    rho_step: float
    theta_step: float
    rho_offset: int
    edge_count: int

    @property
    def n_theta(self) -> int:
        return self.votes.shape[1]

    @property
    def n_rho(self) -> int:
        return self.votes.shape[0]

    def rho_of(self, index) -> float:
        return (index - self.rho_offset) * self.rho_step

    def theta_of(self, index) -> float:
        return index * self.theta_step

    def thetas(self) -> np.ndarray:
        return np.arange(self.n_theta) * self.theta_step


def accumulate(edges: np.ndarray, cfg: HoughConfig = HoughConfig()) -> HoughAccumulator:
    """One vote per (edge pixel, theta bin) at the nearest rho bin.

    The edge pixel at row y, column x votes with coordinates (x, y).
    """
    edges = np.asarray(edges, dtype=bool)
    if edges.ndim != 2 or edges.size == 0:
        raise ValueError("edge grid must be a non-empty 2-D array")
    h, w = edges.shape
    n_theta = max(1, int(round(math.pi / cfg.theta_step)))
    offset = int(math.ceil(math.hypot(w, h) / cfg.rho_step))
    n_rho = 2 * offset + 1
    ys, xs = np.nonzero(edges)
    xs = xs.astype(float)
    ys = ys.astype(float)
    thetas = np.arange(n_theta) * cfg.theta_step
    flat = np.zeros(n_rho * n_theta, dtype=np.int64)
    for t0 in range(0, n_theta, _THETA_CHUNK):
        t = thetas[t0 : t0 + _THETA_CHUNK]
        rho = np.outer(np.cos(t), xs) + np.outer(np.sin(t), ys)
        ridx = np.floor(rho / cfg.rho_step + 0.5).astype(np.int64) + offset
        tidx = np.arange(t0, t0 + len(t))[:, None]
        flat += np.bincount((ridx * n_theta + tidx).ravel(), minlength=n_rho * n_theta)
    return HoughAccumulator(flat.reshape(n_rho, n_theta), cfg.rho_step, cfg.theta_step, offset, int(len(xs)))


def default_thresholds(edges: np.ndarray, fraction: float = 0.25) -> tuple[int, int]:
    """Heuristic (vertical, horizontal) vote thresholds; horizontal is twice vertical.

    The vertical threshold is ``fraction`` of the grid height, at least 20.
    A tuning default only; strongly tilted views need a lower fraction.
    """
    height = np.asarray(edges).shape[0]
    tv = max(20, int(fraction * height))
    return tv, 2 * tv


def _canonical_index(acc: HoughAccumulator, r: np.ndarray, t: np.ndarray):
    """Fold theta indices outside [0, n_theta) back, mirroring rho."""
    r = r.copy()
    t = t.copy()
    low, high = t < 0, t >= acc.n_theta
    t[low] += acc.n_theta
    t[high] -= acc.n_theta
    flip = low | high
    r[flip] = acc.n_rho - 1 - r[flip]
    return r, t


def find_peaks(acc: HoughAccumulator, cfg: HoughConfig) -> list[tuple[int, int, int]]:
    """Local maxima ``(votes, rho_index, theta_index)`` meeting their class threshold.

    A bin must beat every other bin in its (+-dr, +-dt) window; ties go to the
    smaller (rho_index, theta_index). The theta axis wraps with rho mirrored.
    """
    tv, th = cfg.threshold_vertical, cfg.threshold_horizontal
    if tv is None or th is None:
        raise ValueError("thresholds must be resolved before peak extraction")
    votes = acc.votes
    thetas = acc.thetas()
    horiz = (thetas >= math.pi / 4) & (thetas < 3 * math.pi / 4)
    need = np.where(horiz, th, tv)[None, :]
    cand_r, cand_t = np.nonzero(votes >= need)
    if cand_r.size == 0:
        return []
    dr, dt = cfg.nms_window
    v0 = votes[cand_r, cand_t]
    keep = np.ones(cand_r.size, dtype=bool)
    for a in range(-dr, dr + 1):
        for b in range(-dt, dt + 1):
            if a == 0 and b == 0:
                continue
            nr, nt = _canonical_index(acc, cand_r + a, cand_t + b)
            valid = (nr >= 0) & (nr < acc.n_rho)
            nv = np.full(cand_r.size, -1, dtype=np.int64)
            nv[valid] = votes[nr[valid], nt[valid]]
            earlier = (nr < cand_r) | ((nr == cand_r) & (nt < cand_t))
            keep &= (v0 > nv) | ((v0 == nv) & ~earlier)
    peaks = [(int(v), int(r), int(t)) for v, r, t in zip(v0[keep], cand_r[keep], cand_t[keep])]
    peaks.sort(key=lambda p: (-p[0], p[1], p[2]))
    return peaks


def extract_lines(
    acc: HoughAccumulator, cfg: HoughConfig, edges: np.ndarray | None = None, band: float | None = None
) -> tuple[list[PolarLine], list[PolarLine]]:
    """Split peaks into (horizontal, vertical) lines ordered by descending votes.

    With ``edges`` each peak is re-fitted by :func:`refine_line`; the class
    split and the per-class cap are decided on the raw peaks.
    """
    horizontal, vertical = [], []
    for votes, r, t in find_peaks(acc, cfg):
        line = PolarLine(acc.rho_of(r), acc.theta_of(t), votes)
        bucket = horizontal if line.is_horizontal else vertical
        if len(bucket) < cfg.max_lines_per_class:
            bucket.append(line)
    if edges is not None:
        band = max(1.5, cfg.rho_step) if band is None else band
        horizontal = [refine_line(edges, l, band) for l in horizontal]
        vertical = [refine_line(edges, l, band) for l in vertical]
    return horizontal, vertical


def refine_line(edges: np.ndarray, line: PolarLine, band: float = 1.5, iterations: int = 3) -> PolarLine:
    """Total-least-squares fit to the edge pixels within ``band`` px of ``line``.

    Removes the rho/theta quantisation of the accumulator. The vote count is
    carried over unchanged.
    """
    ys, xs = np.nonzero(edges)
    pts = np.column_stack([xs, ys]).astype(float)
    cur = line
    for _ in range(iterations):
        d = pts @ np.array([math.cos(cur.theta), math.sin(cur.theta)]) - cur.rho
        sel = pts[np.abs(d) <= band]
        if len(sel) < 2:
            return cur
        c = sel.mean(axis=0)
        _, vecs = np.linalg.eigh(np.cov((sel - c).T))
        n = vecs[:, 0]
        # keep the normal on the same side so the class does not flip
        if n @ np.array([math.cos(cur.theta), math.sin(cur.theta)]) < 0:
            n = -n
        cur = PolarLine(float(c @ n), math.atan2(n[1], n[0]), line.votes)
    return cur
