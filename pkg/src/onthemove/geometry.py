"""Planar geometry shared by the planners and the simulator.

Angles are normalized into (-pi, pi]. Polygons are convex with
counter-clockwise winding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# Tolerance (meters) for treating a point as lying on a polygon edge line.
EDGE_EPS = 1e-9


def wrap_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = a - TWO_PI * math.floor((a + math.pi) / TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    elif a > math.pi:
        a -= TWO_PI
    return a


def angle_diff(a: float, b: float) -> float:
    """Signed shortest difference a - b, in (-pi, pi]."""
    return wrap_angle(a - b)


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)

    def distance_to(self, p: Sequence[float]) -> float:
        return math.hypot(p[0] - self.x, p[1] - self.y)

    def with_theta(self, theta: float) -> Pose2D:
        return Pose2D(self.x, self.y, theta)


@dataclass(frozen=True)
class Twist:
    v: float = 0.0
    omega: float = 0.0


class ConvexPolygon:
    """Convex polygon, CCW vertex order.

    Edge half-planes are cached as unit outward normals ``normals`` and
    offsets ``offsets`` so that a point p is inside iff
    ``normals @ p <= offsets`` for every edge.
    """

    __slots__ = ("vertices", "normals", "offsets")

    def __init__(self, vertices: Iterable[Sequence[float]]):
        v = np.asarray([tuple(map(float, p)) for p in vertices], dtype=float)
        if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
            raise ValueError("a polygon needs at least 3 two-dimensional vertices")
        if _signed_area(v) < 0.0:
            v = v[::-1].copy()
        if _signed_area(v) <= 0.0:
            raise ValueError("degenerate polygon (zero area)")
        edges = np.roll(v, -1, axis=0) - v
        cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
        if np.any(cross < -1e-12):
            raise ValueError("polygon is not convex")
        lengths = np.hypot(edges[:, 0], edges[:, 1])
        if np.any(lengths <= 0.0):
            raise ValueError("polygon has repeated vertices")
        normals = np.column_stack((edges[:, 1], -edges[:, 0])) / lengths[:, None]
        v.flags.writeable = False
        normals.flags.writeable = False
        offsets = np.einsum("ij,ij->i", normals, v)
        offsets.flags.writeable = False
        self.vertices = v
        self.normals = normals
        self.offsets = offsets

    def __len__(self) -> int:
        return self.vertices.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConvexPolygon):
            return NotImplemented
        return self.vertices.shape == other.vertices.shape and bool(np.all(self.vertices == other.vertices))

    def __hash__(self) -> int:
        return hash(self.vertices.tobytes())

    def __repr__(self) -> str:
        return f"ConvexPolygon({self.vertices.tolist()!r})"

    @property
    def area(self) -> float:
        return _signed_area(self.vertices)

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def contains(self, p: Sequence[float], eps: float = EDGE_EPS) -> bool:
        """Closed containment test (boundary counts as inside)."""
        return bool(np.all(self.normals @ np.asarray(p, dtype=float) <= self.offsets + eps))

    def contains_points(self, pts: np.ndarray, eps: float = EDGE_EPS) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.all(pts @ self.normals.T <= self.offsets + eps, axis=-1)

    def boundary_distance(self, pts: np.ndarray) -> np.ndarray:
        """Distance from each point to the polygon boundary."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        a = self.vertices
        b = np.roll(a, -1, axis=0)
        return np.min(_points_segments_distance(pts, a, b), axis=1)


def regular_polygon(center: Sequence[float], radius: float, n: int = 16) -> ConvexPolygon:
    """Regular n-gon circumscribing a disc of the given radius."""
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    r_vertex = radius / math.cos(math.pi / n)
    cx, cy = float(center[0]), float(center[1])
    # Offset by half a step so the 0 and 90 degree directions hit edge midpoints.
    angles = (np.arange(n) + 0.5) * TWO_PI / n
    return ConvexPolygon(np.column_stack((cx + r_vertex * np.cos(angles), cy + r_vertex * np.sin(angles))))


def rectangle(center: Sequence[float], size: Sequence[float]) -> ConvexPolygon:
    cx, cy = float(center[0]), float(center[1])
    hw, hh = float(size[0]) / 2.0, float(size[1]) / 2.0
    if hw <= 0.0 or hh <= 0.0:
        raise ValueError("rectangle size must be positive")
    return ConvexPolygon([(cx - hw, cy - hh), (cx + hw, cy - hh), (cx + hw, cy + hh), (cx - hw, cy + hh)])


def point_segment_distance(p: Sequence[float], a: Sequence[float], b: Sequence[float]) -> float:
    px, py = float(p[0]), float(p[1])
    ax, ay = float(a[0]), float(a[1])
    dx, dy = float(b[0]) - ax, float(b[1]) - ay
    den = dx * dx + dy * dy
    if den == 0.0:
        return math.hypot(px - ax, py - ay)
    t = min(1.0, max(0.0, ((px - ax) * dx + (py - ay) * dy) / den))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def closest_param_on_segment(p: Sequence[float], a: Sequence[float], b: Sequence[float]) -> float:
    dx, dy = b[0] - a[0], b[1] - a[1]
    den = dx * dx + dy * dy
    if den == 0.0:
        return 0.0
    return min(1.0, max(0.0, ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / den))


def _points_segments_distance(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise distances, shape (len(pts), len(a))."""
    d = b - a
    den = np.einsum("ij,ij->i", d, d)
    rel = pts[:, None, :] - a[None, :, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.einsum("nkj,kj->nk", rel, d) / den
    t = np.clip(np.nan_to_num(t), 0.0, 1.0)
    foot = a[None, :, :] + t[..., None] * d[None, :, :]
    return np.hypot(pts[:, None, 0] - foot[..., 0], pts[:, None, 1] - foot[..., 1])


def segments_intersect_polygon(a: np.ndarray, b: np.ndarray, poly: ConvexPolygon, margin: float = 0.0) -> np.ndarray:
    """Vectorized :func:`segment_intersects_polygon` over segment arrays of shape (S, 2).

    A positive ``margin`` tests against the polygon shrunk by that distance.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    d = b - a
    num = (poly.offsets - margin)[None, :] - a @ poly.normals.T  # (S, K); >= 0 means a is inside that half-plane
    den = d @ poly.normals.T
    parallel = np.abs(den) < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / den
    lower = np.where(~parallel & (den < 0.0), t, -np.inf).max(axis=1)
    upper = np.where(~parallel & (den > 0.0), t, np.inf).min(axis=1)
    outside_parallel = np.any(parallel & (num < -EDGE_EPS), axis=1)
    t0 = np.maximum(lower, 0.0)
    t1 = np.minimum(upper, 1.0)
    # Open segment: the overlap must reach strictly past either endpoint.
    tol = 1e-12
    hit = (t0 <= t1 + tol) & (t1 > 1e-9) & (t0 < 1.0 - 1e-9)
    return hit & ~outside_parallel


def segment_intersects_polygon(a: Sequence[float], b: Sequence[float], poly: ConvexPolygon) -> bool:
    """True iff the open segment (a, b) meets the closed polygon.

    Grazing a vertex or running along an edge counts as a hit.
    """
    return bool(segments_intersect_polygon(np.asarray(a, dtype=float), np.asarray(b, dtype=float), poly)[0])


def inflate_polygon(poly: ConvexPolygon, r: float) -> ConvexPolygon:
    """Grow a convex polygon by ``r`` by pushing each vertex along its bisector.

    Each vertex moves by ``r / cos(phi / 2)`` where ``phi`` is the turn angle
    at that vertex, which shifts every edge outward by exactly ``r``. The
    result contains the Minkowski sum of the polygon with a disc of radius r.
    """
    if r < 0.0:
        raise ValueError("inflation radius must be non-negative")
    if r == 0.0:
        return poly
    n_prev = np.roll(poly.normals, 1, axis=0)  # normal of the edge ending at vertex i
    n_next = poly.normals  # normal of the edge starting at vertex i
    bis = n_prev + n_next
    bis /= np.hypot(bis[:, 0], bis[:, 1])[:, None]
    cos_half = np.einsum("ij,ij->i", bis, n_next)
    return ConvexPolygon(poly.vertices + (r / cos_half)[:, None] * bis)


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
