"""Projective-geometry primitives.

Image convention: x to the right, y down. A polar line (rho, theta) is the set
of points with ``x*cos(theta) + y*sin(theta) = rho``; theta is the angle from
the +x axis to the line normal and is kept in [0, pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .annotations import PolygonMask
from .errors import DegenerateQuad, NoIntersection, ProjectionError

PARALLEL_TOL = 1e-9
PIVOT_TOL = 1e-10
DET_TOL = 1e-12
W_TOL = 1e-12


@dataclass(frozen=True)
class PolarLine:
    rho: float
    theta: float
    votes: int | None = field(default=None, compare=False)

    def __post_init__(self):
        rho, theta = float(self.rho), math.fmod(float(self.theta), 2 * math.pi)
        if theta < 0:
            theta += 2 * math.pi
        if theta >= math.pi:
            theta -= math.pi
            rho = -rho
        if theta >= math.pi:  # fmod rounding can land exactly on pi
            theta = 0.0
            rho = -rho
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def through(cls, p, q) -> "PolarLine":
        """Line through two distinct points."""
        dx, dy = q[0] - p[0], q[1] - p[1]
        theta = math.atan2(dx, -dy)  # normal is the direction rotated by +90 deg
        return cls(p[0] * math.cos(theta) + p[1] * math.sin(theta), theta)

    @property
    def is_horizontal(self) -> bool:
        """Direction within 45 deg of the x axis, i.e. normal in [45, 135) deg."""
        return math.pi / 4 <= self.theta < 3 * math.pi / 4

    def y_intercept(self) -> float:
        return self.rho / math.sin(self.theta)

    def x_intercept(self) -> float:
        return self.rho / math.cos(self.theta)


def line_eval(line: PolarLine, point) -> float:
    """Signed distance of ``point`` from ``line``."""
    x, y = point
    return x * math.cos(line.theta) + y * math.sin(line.theta) - line.rho


def intersect(l1: PolarLine, l2: PolarLine) -> tuple[float, float]:
    c1, s1 = math.cos(l1.theta), math.sin(l1.theta)
    c2, s2 = math.cos(l2.theta), math.sin(l2.theta)
    det = c1 * s2 - s1 * c2  # sin(theta2 - theta1)
    if abs(det) <= PARALLEL_TOL:
        raise NoIntersection(abs(det))
    x = (l1.rho * s2 - l2.rho * s1) / det
    y = (c1 * l2.rho - c2 * l1.rho) / det
    return (x, y)


@dataclass(frozen=True, eq=False)
class Homography:
    """3x3 projective transform normalised so that h33 == 1."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(m)):
            raise DegenerateQuad("homography has non-finite entries")
        if abs(m[2, 2]) < DET_TOL:
            raise DegenerateQuad("homography has h33 ~ 0 and cannot be normalised")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= DET_TOL:
            raise DegenerateQuad("homography is singular")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "Homography":
        if len(values) != 9:
            raise ValueError("homography needs 9 values")
        return cls(np.asarray(values, dtype=float).reshape(3, 3))

    def to_list(self) -> list[float]:
        return [float(v) for v in self.matrix.ravel()]

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def __matmul__(self, other: "Homography") -> "Homography":
        return Homography(self.matrix @ other.matrix)

    def apply(self, point) -> tuple[float, float]:
        return _project(self.matrix, point)

    def apply_inverse(self, point) -> tuple[float, float]:
        return _project(np.linalg.inv(self.matrix), point)

    def apply_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        hom = np.column_stack([pts, np.ones(len(pts))]) @ self.matrix.T
        if np.any(np.abs(hom[:, 2]) <= W_TOL):
            raise ProjectionError("point maps to infinity")
        return hom[:, :2] / hom[:, 2:3]

    def __repr__(self):
        return f"Homography({self.to_list()})"


def _project(m: np.ndarray, point) -> tuple[float, float]:
    x, y = point
    u = m[0, 0] * x + m[0, 1] * y + m[0, 2]
    v = m[1, 0] * x + m[1, 1] * y + m[1, 2]
    w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    if abs(w) <= W_TOL:
        raise ProjectionError(f"point {point} maps to infinity (w={w:.3e})")
    return (u / w, v / w)


def apply(h: Homography, point) -> tuple[float, float]:
    return h.apply(point)


def apply_inverse(h: Homography, point) -> tuple[float, float]:
    return h.apply_inverse(point)


def warp_polygon(h: Homography, mask: PolygonMask) -> PolygonMask:
    pts = h.apply_many(mask.as_array())
    return PolygonMask(tuple(map(tuple, pts)))


# -- DLT ------------------------------------------------------------------------


def _conditioning(pts: np.ndarray) -> np.ndarray:
    """Similarity taking points to zero centroid and mean distance sqrt(2)."""
    c = pts.mean(axis=0)
    d = np.mean(np.hypot(*(pts - c).T))
    if d <= 0:
        raise DegenerateQuad("all points coincide")
    s = math.sqrt(2) / d
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def solve_pivoted(a: np.ndarray, b: np.ndarray, pivot_tol: float = PIVOT_TOL) -> np.ndarray:
    """Gaussian elimination with partial pivoting.

    Raises DegenerateQuad when a pivot falls below ``pivot_tol``.
    """
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    n = len(b)
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) < pivot_tol:
            raise DegenerateQuad(f"singular system (pivot {abs(a[p, k]):.3e} at column {k})")
        if p != k:
            a[[k, p]] = a[[p, k]]
            b[[k, p]] = b[[p, k]]
        f = a[k + 1 :, k] / a[k, k]
        a[k + 1 :, k:] -= np.outer(f, a[k, k:])
        b[k + 1 :] -= f * b[k]
    x = np.zeros(n)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - a[k, k + 1 :] @ x[k + 1 :]) / a[k, k]
    return x


def homography_from_points(src, dst) -> Homography:
    """Exact homography from four point correspondences (conditioned DLT)."""
    src = np.asarray(src, dtype=float).reshape(4, 2)
    dst = np.asarray(dst, dtype=float).reshape(4, 2)
    ts, td = _conditioning(src), _conditioning(dst)
    s = np.column_stack([src, np.ones(4)]) @ ts.T
    d = np.column_stack([dst, np.ones(4)]) @ td.T
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i in range(4):
        x, y = s[i, :2]
        u, v = d[i, :2]
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i] = u
        b[2 * i + 1] = v
    h = np.append(solve_pivoted(a, b), 1.0).reshape(3, 3)
    return Homography(np.linalg.inv(td) @ h @ ts)


@dataclass(frozen=True)
class Quadrilateral:
    """Convex quad with corners ordered TL, TR, BR, BL (y down)."""

    corners: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.corners)
        if len(pts) != 4:
            raise DegenerateQuad("quadrilateral needs exactly 4 corners")
        object.__setattr__(self, "corners", pts)
        scale = max(1.0, max(abs(c) for p in pts for c in p))
        for i in range(4):
            a, b, c = pts[i], pts[(i + 1) % 4], pts[(i + 2) % 4]
            cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
            if cross <= 1e-12 * scale * scale:
                raise DegenerateQuad(f"quadrilateral not strictly convex / not TL-TR-BR-BL ordered at corner {i + 1}")
        if PolygonMask(pts).signed_area() <= 0:
            raise DegenerateQuad("quadrilateral has non-positive area")
        if pts[0] != min(pts, key=lambda p: (p[0] + p[1], p[1])):
            raise DegenerateQuad("first corner is not the top-left one")

    @classmethod
    def from_points(cls, points) -> "Quadrilateral":
        """Order four arbitrary points by angle about their centroid."""
        pts = [tuple(map(float, p)) for p in points]
        cx = sum(p[0] for p in pts) / len(pts)
        cy = sum(p[1] for p in pts) / len(pts)
        pts.sort(key=lambda p: math.atan2(p[1] - cy, p[0] - cx))
        start = pts.index(min(pts, key=lambda p: (p[0] + p[1], p[1])))
        return cls(tuple(pts[start:] + pts[:start]))

    @property
    def tl(self):
        return self.corners[0]

    @property
    def tr(self):
        return self.corners[1]

    @property
    def br(self):
        return self.corners[2]

    @property
    def bl(self):
        return self.corners[3]


def homography_from_quad(src: Quadrilateral, dst_width: float, dst_height: float) -> Homography:
    """Map the quad corners onto (0,0), (W,0), (W,H), (0,H)."""
    if dst_width <= 0 or dst_height <= 0:
        raise ValueError("destination size must be positive")
    dst = [(0.0, 0.0), (dst_width, 0.0), (dst_width, dst_height), (0.0, dst_height)]
    return homography_from_points(src.corners, dst)
