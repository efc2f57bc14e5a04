"""Points, oriented quadrilaterals and rotated rectangles.

Conventions used throughout the package:

* image coordinates, ``x`` to the right and ``y`` downward;
* a quad is a ``(4, 2)`` float array ordered top-left, top-right,
  bottom-right, bottom-left, which is clockwise on screen and has a
  *positive* shoelace area;
* a rotation by ``theta`` maps a box-local vector ``v`` to
  ``[[cos, -sin], [sin, cos]] @ v`` in image coordinates;
* rectangle angles are canonical in ``[-pi/4, pi/4)``.

Decoded quads are never clipped to the image bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from mostdet import _kernels

QUARTER_PI = math.pi / 4


class GeometryError(ValueError):
    """Raised on degenerate or non-convex input where a result is undefined."""


class Geometry5(NamedTuple):
    """Per-pixel RBOX: distances to the four rectangle sides plus angle."""

    d_top: float
    d_right: float
    d_bottom: float
    d_left: float
    theta: float


def as_quad(points) -> np.ndarray:
    q = np.asarray(points, dtype=np.float64)
    if q.shape == (8,):
        q = q.reshape(4, 2)
    if q.shape != (4, 2):
        raise GeometryError(f"a quad needs 4 vertices, got array of shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise GeometryError("quad vertices must be finite")
    return q


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def signed_area(poly) -> float:
    p = np.asarray(poly, dtype=np.float64)
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def quad_area(q) -> float:
    """Shoelace area of a quad; zero for a collapsed one."""
    return abs(signed_area(as_quad(q)))


def is_convex(poly, tol: float = 1e-12) -> bool:
    p = np.asarray(poly, dtype=np.float64)
    d1 = np.roll(p, -1, axis=0) - p
    d2 = np.roll(p, -2, axis=0) - np.roll(p, -1, axis=0)
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    return bool(np.all(cross >= -tol) or np.all(cross <= tol))


def _positive(q: np.ndarray) -> np.ndarray:
    return q[::-1].copy() if signed_area(q) < 0 else q


def polygon_clip(subject, clip) -> np.ndarray:
    """Intersection of two convex quads as an ``(n, 2)`` polygon, ``n <= 8``.

    The result is positively oriented; an empty intersection gives a
    ``(0, 2)`` array.
    """
    s, c = as_quad(subject), as_quad(clip)
    if not is_convex(s) or not is_convex(c):
        raise GeometryError("non-convex polygon")
    s, c = _positive(s), _positive(c)
    if signed_area(s) <= 0 or signed_area(c) <= 0:
        return np.zeros((0, 2))
    xs, ys, n = _kernels.clip_convex(
        np.ascontiguousarray(s[:, 0]), np.ascontiguousarray(s[:, 1]), 4,
        np.ascontiguousarray(c[:, 0]), np.ascontiguousarray(c[:, 1]), 4)
    if n < 3:
        return np.zeros((0, 2))
    return np.stack([xs, ys], axis=1)


def quad_iou(a, b) -> float:
    """Polygon IoU of two quads; 0 when either has zero area."""
    qa = as_quad(a).ravel()
    qb = as_quad(b).ravel()
    return float(_kernels.quad_iou_flat(qa, qb))


def intersection_area(a, b) -> float:
    return float(_kernels.intersection_area_flat(as_quad(a).ravel(), as_quad(b).ravel()))


@dataclass(frozen=True)
class RotatedRect:
    """Rectangle of ``width`` along the rotated x-axis and ``height`` along
    the rotated y-axis. The angle is folded into ``[-pi/4, pi/4)`` on
    construction, swapping width and height when needed."""

    cx: float
    cy: float
    width: float
    height: float
    theta: float = 0.0

    def __post_init__(self):
        if self.width < 0 or self.height < 0:
            raise GeometryError("rectangle sides must be non-negative")
        theta, swap = canonical_angle(self.theta)
        if swap:
            w, h = self.height, self.width
            object.__setattr__(self, "width", w)
            object.__setattr__(self, "height", h)
        object.__setattr__(self, "theta", theta)

    @property
    def center(self) -> tuple[float, float]:
        return (self.cx, self.cy)

    @property
    def area(self) -> float:
        return self.width * self.height

    def to_quad(self) -> np.ndarray:
        hw, hh = self.width / 2, self.height / 2
        local = np.array([[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]])
        return local @ rotation(self.theta).T + np.array([self.cx, self.cy])

    def side_distances(self, points) -> np.ndarray:
        """Distances from image points to the (top, right, bottom, left) sides,
        positive inside. Shape ``(..., 4)``."""
        p = np.asarray(points, dtype=np.float64)
        local = (p - np.array([self.cx, self.cy])) @ rotation(self.theta)
        lx, ly = local[..., 0], local[..., 1]
        hw, hh = self.width / 2, self.height / 2
        return np.stack([ly + hh, hw - lx, hh - ly, lx + hw], axis=-1)


def canonical_angle(theta: float) -> tuple[float, bool]:
    """Fold ``theta`` into ``[-pi/4, pi/4)`` by quarter turns.

    Returns the folded angle and whether an odd number of quarter turns was
    removed (meaning width and height trade places).
    """
    k = math.floor((theta + QUARTER_PI) / (math.pi / 2))
    folded = theta - k * (math.pi / 2)
    # guard the half-open upper end against rounding
    if folded >= QUARTER_PI:
        folded -= math.pi / 2
        k += 1
    elif folded < -QUARTER_PI:
        folded += math.pi / 2
        k -= 1
    return folded, bool(k % 2)


def convex_hull(points) -> np.ndarray:
    """Andrew's monotone chain; positively oriented (clockwise on screen)."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=np.float64).tolist())))
    if len(pts) <= 2:
        return np.array(pts, dtype=np.float64).reshape(-1, 2)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=np.float64)


def min_area_rect(q) -> RotatedRect:
    """Minimum-area enclosing rectangle via rotating calipers on the hull.

    One side of the optimal rectangle is collinear with a hull edge, so it
    is enough to try every hull-edge direction.
    """
    pts = as_quad(q)
    hull = convex_hull(pts)
    if len(hull) < 3 or abs(signed_area(hull)) <= 1e-12:
        raise GeometryError("degenerate quadrangle")
    best = None
    edges = np.roll(hull, -1, axis=0) - hull
    for ex, ey in edges:
        length = math.hypot(ex, ey)
        if length == 0:
            continue
        phi = math.atan2(ey, ex)
        local = hull @ rotation(phi)
        lo, hi = local.min(axis=0), local.max(axis=0)
        area = float(np.prod(hi - lo))
        if best is None or area < best[0] - 1e-12:
            best = (area, phi, lo, hi)
    _, phi, lo, hi = best
    center = rotation(phi) @ ((lo + hi) / 2)
    w, h = hi - lo
    return RotatedRect(float(center[0]), float(center[1]), float(w), float(h), phi)


def decode_rbox(pixel, g, stride: int) -> np.ndarray:
    """Quad predicted at feature ``pixel = (x, y)`` by geometry ``g``.

    The image anchor is ``stride * pixel`` (no half-pixel shift).
    """
    if stride <= 0:
        raise GeometryError("stride must be positive")
    d_top, d_right, d_bottom, d_left, theta = (float(v) for v in g)
    anchor = stride * np.asarray(pixel, dtype=np.float64)
    local = np.array([[-d_left, -d_top], [d_right, -d_top],
                      [d_right, d_bottom], [-d_left, d_bottom]])
    return local @ rotation(theta).T + anchor


def decode_rbox_grid(xs, ys, geometry, stride: int) -> np.ndarray:
    """Vectorized :func:`decode_rbox` for ``n`` pixels; returns ``(n, 4, 2)``."""
    g = np.asarray(geometry, dtype=np.float64)
    t, r, b, l, th = g[:, 0], g[:, 1], g[:, 2], g[:, 3], g[:, 4]
    c, s = np.cos(th), np.sin(th)
    lx = np.stack([-l, r, r, -l], axis=1)
    ly = np.stack([-t, -t, b, b], axis=1)
    ax = stride * np.asarray(xs, dtype=np.float64)[:, None]
    ay = stride * np.asarray(ys, dtype=np.float64)[:, None]
    return np.stack([ax + c[:, None] * lx - s[:, None] * ly,
                     ay + s[:, None] * lx + c[:, None] * ly], axis=2)


def points_in_polygon(points, poly, tol: float = 1e-9) -> np.ndarray:
    """Inside-or-on test for an arbitrary simple polygon (winding number).

    Points within ``tol`` of an edge count as inside.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    v = np.asarray(poly, dtype=np.float64)
    px, py = p[:, 0:1], p[:, 1:2]
    ax, ay = v[:, 0][None, :], v[:, 1][None, :]
    bx, by = np.roll(v[:, 0], -1)[None, :], np.roll(v[:, 1], -1)[None, :]
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    up = (ay <= py) & (by > py) & (cross > 0)
    down = (ay > py) & (by <= py) & (cross < 0)
    winding = up.sum(axis=1) - down.sum(axis=1)
    # boundary: distance to any edge segment within tol
    ex, ey = bx - ax, by - ay
    seg2 = ex * ex + ey * ey
    t = np.clip(((px - ax) * ex + (py - ay) * ey) / np.where(seg2 > 0, seg2, 1.0), 0.0, 1.0)
    dx, dy = ax + t * ex - px, ay + t * ey - py
    on_edge = np.any(dx * dx + dy * dy <= tol * tol, axis=1)
    return (winding != 0) | on_edge


def canonical_vertex_order(q) -> np.ndarray:
    """Reorder a quad to clockwise-on-screen, top-left first.

    The starting vertex is the cyclic rotation whose top edge (v0->v1) and
    reversed bottom edge (v3->v2) point most nearly along +x.
    """
    q = _positive(as_quad(q))
    best, best_score = 0, -math.inf
    for k in range(4):
        r = np.roll(q, -k, axis=0)
        top = r[1] - r[0]
        bottom = r[2] - r[3]
        score = 0.0
        for e in (top, bottom):
            n = math.hypot(*e)
            if n > 0:
                score += e[0] / n
        if score > best_score + 1e-12:
            best, best_score = k, score
    return np.roll(q, -best, axis=0)
