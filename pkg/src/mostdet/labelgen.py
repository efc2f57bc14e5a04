"""Ground-truth maps at feature stride: score, RBOX geometry,
position-sensitive maps, training mask and instance ids."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from mostdet.geometry import (
    GeometryError,
    as_quad,
    min_area_rect,
    points_in_polygon,
    quad_area,
    signed_area,
)

logger = logging.getLogger(__name__)

DEFAULT_SHRINK = 0.3
DEFAULT_ALPHA = 0.75

# geometry channel feeding each position-sensitive channel (left, right, top, bottom)
POSSENS_FROM_GEOMETRY = (3, 1, 0, 2)


@dataclass(frozen=True)
class TextInstance:
    quad: np.ndarray
    dont_care: bool = False
    text: str = ""

    def __post_init__(self):
        object.__setattr__(self, "quad", as_quad(self.quad))


@dataclass(frozen=True)
class PosSensParams:
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")


@dataclass
class LabelMaps:
    """Dense targets on the ``(H/stride, W/stride)`` grid.

    ``geometry`` channels are (top, right, bottom, left, theta);
    ``possens`` channels are (left, right, top, bottom).
    """

    score: np.ndarray
    geometry: np.ndarray
    possens: np.ndarray
    train_mask: np.ndarray
    instance_id: np.ndarray
    stride: int
    skipped: int = 0
    skipped_ids: list[int] = field(default_factory=list)

    @property
    def positives(self) -> np.ndarray:
        return (self.score > 0) & (self.train_mask > 0)

    @property
    def shape(self) -> tuple[int, int]:
        return self.score.shape


def shrink_quad(q, ratio: float = DEFAULT_SHRINK):
    """Pull every vertex inward along both incident edges by
    ``ratio * r_i``, ``r_i`` being the shorter incident edge length.

    The longer pair of opposite edges is shrunk first. Returns ``None`` when
    the quad collapses.
    """
    if not 0 <= ratio < 0.5:
        raise ValueError("shrink ratio must lie in [0, 0.5)")
    p = as_quad(q).copy()
    if ratio == 0:
        return p
    lengths = np.linalg.norm(p - np.roll(p, -1, axis=0), axis=1)  # edges i -> i+1
    ref = np.minimum(lengths, np.roll(lengths, 1))

    def pull(i, j):
        d = p[j] - p[i]
        n = np.hypot(*d)
        if n == 0:
            return
        u = d / n
        p[i] += ratio * ref[i] * u
        p[j] -= ratio * ref[j] * u

    horizontal = [(0, 1), (3, 2)]
    vertical = [(0, 3), (1, 2)]
    if lengths[0] + lengths[2] > lengths[1] + lengths[3]:
        order = horizontal + vertical
    else:
        order = vertical + horizontal
    for i, j in order:
        pull(i, j)
    if signed_area(p) * signed_area(q) <= 0:
        return None
    return p


def position_sensitive_value(dist: float, dists_all, alpha: float = DEFAULT_ALPHA) -> float:
    d = np.asarray(dists_all, dtype=np.float64)
    if d.size == 0:
        raise ValueError("dists_all must not be empty")
    return float(position_sensitive_values(np.array([dist]), d.min(), d.max(), alpha)[0])


def position_sensitive_values(dists, lo: float, hi: float, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Linear ramp from 1 at the nearest positive down to 0 at the cutoff
    ``lo + alpha * (hi - lo)``; constant 1 when all distances coincide."""
    dists = np.asarray(dists, dtype=np.float64)
    if hi <= lo:
        return np.ones_like(dists)
    cutoff = alpha * (hi - lo) + lo
    # same as 1 - (d - lo) / (cutoff - lo), but stays > 0 for every d < cutoff
    out = (cutoff - dists) / (cutoff - lo)
    return np.where(dists < cutoff, np.clip(out, 0.0, 1.0), 0.0)


def _feature_points_in(poly, stride, shape):
    """Feature pixels whose image anchor ``stride * (x, y)`` lies in ``poly``."""
    h, w = shape
    lo = np.floor(poly.min(axis=0) / stride).astype(int)
    hi = np.ceil(poly.max(axis=0) / stride).astype(int)
    x0, y0 = max(lo[0], 0), max(lo[1], 0)
    x1, y1 = min(hi[0], w - 1), min(hi[1], h - 1)
    if x1 < x0 or y1 < y0:
        return np.zeros(0, int), np.zeros(0, int)
    ys, xs = np.mgrid[y0:y1 + 1, x0:x1 + 1]
    xs, ys = xs.ravel(), ys.ravel()
    pts = np.stack([xs, ys], axis=1).astype(np.float64) * stride
    inside = points_in_polygon(pts, poly)
    return xs[inside], ys[inside]


def generate_maps(instances, image_size, stride: int = 4,
                  shrink_ratio: float = DEFAULT_SHRINK,
                  psp: PosSensParams | None = None) -> LabelMaps:
    """Rasterize text instances into training targets.

    Overlaps go to the instance with the smaller quad area. Pixels inside a
    don't-care quad are removed from training (mask 0, never positive).
    """
    psp = psp or PosSensParams()
    H, W = image_size
    if H % stride or W % stride:
        raise ValueError(f"image size {H}x{W} not divisible by stride {stride}")
    h, w = H // stride, W // stride
    score = np.zeros((h, w), np.uint8)
    geometry = np.zeros((h, w, 5), np.float64)
    possens = np.zeros((h, w, 4), np.float64)
    train_mask = np.ones((h, w), np.uint8)
    instance_id = np.zeros((h, w), np.int32)

    cares = [(j, inst) for j, inst in enumerate(instances) if not inst.dont_care]
    areas = np.array([quad_area(inst.quad) for _, inst in cares])
    # largest first so that smaller instances overwrite shared pixels
    order = np.argsort(-areas, kind="stable") if len(cares) else []
    skipped_ids: list[int] = []
    for k in order:
        j, inst = cares[k]
        try:
            rect = min_area_rect(inst.quad)
        except GeometryError:
            skipped_ids.append(j + 1)
            continue
        shrunk = shrink_quad(inst.quad, shrink_ratio)
        if shrunk is None:
            skipped_ids.append(j + 1)
            continue
        xs, ys = _feature_points_in(shrunk, stride, (h, w))
        if xs.size == 0:
            skipped_ids.append(j + 1)
            continue
        anchors = np.stack([xs, ys], axis=1).astype(np.float64) * stride
        dist = np.maximum(rect.side_distances(anchors), 0.0)
        score[ys, xs] = 1
        instance_id[ys, xs] = j + 1
        geometry[ys, xs, :4] = dist
        geometry[ys, xs, 4] = rect.theta

    for inst in instances:
        if not inst.dont_care:
            continue
        xs, ys = _feature_points_in(inst.quad, stride, (h, w))
        train_mask[ys, xs] = 0
        score[ys, xs] = 0
        instance_id[ys, xs] = 0
        geometry[ys, xs] = 0.0

    for j, _ in cares:
        sel = instance_id == j + 1
        if not sel.any():
            if j + 1 not in skipped_ids:
                skipped_ids.append(j + 1)
            continue
        for c, g in enumerate(POSSENS_FROM_GEOMETRY):
            d = geometry[..., g][sel]
            possens[..., c][sel] = position_sensitive_values(d, d.min(), d.max(), psp.alpha)

    if skipped_ids:
        logger.warning("%d text instance(s) produced no positive pixels", len(skipped_ids))
    return LabelMaps(score, geometry, possens, train_mask, instance_id, stride,
                     len(skipped_ids), sorted(skipped_ids))
