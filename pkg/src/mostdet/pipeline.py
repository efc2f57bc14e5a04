"""Map decoding, detection, synthetic oracle maps and evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from mostdet import _kernels
from mostdet.geometry import RotatedRect, decode_rbox_grid, quad_iou, signed_area
from mostdet.labelgen import (
    DEFAULT_SHRINK,
    LabelMaps,
    PosSensParams,
    TextInstance,
    generate_maps,
)
from mostdet.nms import Detections, NmsParams, run_nms


@dataclass
class PredictionMaps:
    """Network-shaped outputs on the stride grid.

    ``geometry_refined`` falls back to ``geometry_coarse`` when absent.
    """

    score: np.ndarray
    geometry_coarse: np.ndarray
    possens: np.ndarray
    geometry_refined: np.ndarray | None = None
    stride: int = 4

    def __post_init__(self):
        hw = np.shape(self.score)
        shapes = [np.shape(self.geometry_coarse)[:2], np.shape(self.possens)[:2]]
        if self.geometry_refined is not None:
            shapes.append(np.shape(self.geometry_refined)[:2])
        if any(s != hw for s in shapes):
            raise ValueError("all prediction grids must share the same spatial shape")

    @property
    def geometry(self) -> np.ndarray:
        return self.geometry_coarse if self.geometry_refined is None else self.geometry_refined

    @classmethod
    def from_labels(cls, labels: LabelMaps) -> "PredictionMaps":
        return cls(labels.score.astype(np.float64), labels.geometry.copy(),
                   labels.possens.copy(), None, labels.stride)


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian distance noise with standard deviation ``sigma0 + sigma1 * d``
    plus Gaussian angle noise."""

    sigma0: float = 0.0
    sigma1: float = 0.0
    angle_sigma: float = 0.0
    seed: int = 0
    bias1: float = 0.0

    def __post_init__(self):
        if min(self.sigma0, self.sigma1, self.angle_sigma) < 0:
            raise ValueError("noise standard deviations must be non-negative")


def decode_maps(maps: PredictionMaps, score_thresh: float = 0.8) -> Detections:
    """Every pixel at or above ``score_thresh`` becomes one candidate, in
    row-major order."""
    score = np.asarray(maps.score)
    ys, xs = np.nonzero(score >= score_thresh)
    if ys.size == 0:
        return Detections.empty()
    geo = np.asarray(maps.geometry, dtype=np.float64)[ys, xs]
    quads = decode_rbox_grid(xs, ys, geo, maps.stride)
    weights = np.asarray(maps.possens, dtype=np.float64)[ys, xs]
    return Detections(quads, score[ys, xs], weights, np.stack([xs, ys], axis=1))


def detect(maps: PredictionMaps, params: NmsParams | None = None,
           variant: str = "position_aware") -> Detections:
    params = params or NmsParams()
    return run_nms(decode_maps(maps, params.score_thresh), params, variant)


def render_oracle_maps(instances, image_size, stride: int = 4, noise: NoiseModel | None = None,
                       image_index: int = 0, shrink_ratio: float = DEFAULT_SHRINK,
                       psp: PosSensParams | None = None) -> PredictionMaps:
    """Prediction maps a perfect network would emit, optionally degraded so
    that distance errors grow with the distance being predicted.

    Randomness comes from a generator seeded with ``(seed, image_index)``.
    """
    noise = noise or NoiseModel()
    labels = generate_maps(instances, image_size, stride, shrink_ratio, psp)
    geometry = labels.geometry.copy()
    pos = labels.score > 0
    n = int(pos.sum())
    rng = np.random.default_rng([noise.seed, image_index])
    z_dist = rng.standard_normal((n, 4))
    z_angle = rng.standard_normal(n)
    d = geometry[pos, :4]
    geometry[pos, :4] = np.maximum(d * (1.0 - noise.bias1) + z_dist * (noise.sigma0 + noise.sigma1 * d), 0.0)
    geometry[pos, 4] = geometry[pos, 4] + noise.angle_sigma * z_angle
    return PredictionMaps(labels.score.astype(np.float64), geometry, labels.possens.copy(),
                          None, stride)


@dataclass
class EvalResult:
    threshold: float
    precision: float
    recall: float
    fmeasure: float
    n_det: int
    n_gt: int
    n_matched: int
    mean_iou: float
    iou_sum: float = 0.0
    matches: list = field(default_factory=list)


def _ratios(matched, n_det, n_gt):
    if n_det == 0 and n_gt == 0:
        return 1.0, 1.0, 1.0
    p = matched / n_det if n_det else 0.0
    r = matched / n_gt if n_gt else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def _result(threshold, n_det, n_gt, matches) -> EvalResult:
    iou_sum = float(sum(m[2] for m in matches))
    p, r, f = _ratios(len(matches), n_det, n_gt)
    mean_iou = iou_sum / len(matches) if matches else 0.0
    return EvalResult(threshold, p, r, f, n_det, n_gt, len(matches), mean_iou, iou_sum, matches)


def evaluate(detections, gts, iou_thresholds=(0.5, 0.7), dont_care_overlap: float = 0.5):
    """Greedy one-to-one matching by descending detection score.

    Detections covering a don't-care region by more than
    ``dont_care_overlap`` of their own area are dropped before counting.
    Returns ``{threshold: EvalResult}``; ``matches`` holds
    ``(detection index, gt index, iou)`` with indices into the inputs.
    """
    dets = detections if isinstance(detections, Detections) else Detections.from_boxes(detections)
    care = [g for g in gts if not g.dont_care]
    dc = [g for g in gts if g.dont_care]
    keep = []
    for i in range(len(dets)):
        q = dets.quads[i].ravel()
        area = abs(signed_area(dets.quads[i]))
        drop = area > 0 and any(
            _kernels.intersection_area_flat(q, g.quad.ravel()) / area > dont_care_overlap for g in dc)
        if not drop:
            keep.append(i)
    keep = np.array(keep, dtype=np.int64)
    care_idx = [j for j, g in enumerate(gts) if not g.dont_care]
    dets = dets[keep]
    order = np.argsort(-dets.scores, kind="stable")
    iou = np.zeros((len(dets), len(care)))
    for i in range(len(dets)):
        for j, g in enumerate(care):
            iou[i, j] = quad_iou(dets.quads[i], g.quad)
    out = {}
    for t in iou_thresholds:
        taken = np.zeros(len(care), bool)
        matches = []
        for i in order:
            if not len(care):
                break
            cand = np.where(taken, -1.0, iou[i])
            j = int(np.argmax(cand))
            if cand[j] >= t and cand[j] >= 0:
                taken[j] = True
                matches.append((int(keep[i]), care_idx[j], float(iou[i, j])))
        out[t] = _result(t, len(dets), len(care), matches)
    return out


def combine_results(results) -> EvalResult:
    """Pool per-image results for one threshold by summing counts."""
    results = list(results)
    if not results:
        raise ValueError("nothing to combine")
    t = results[0].threshold
    n_det = sum(r.n_det for r in results)
    n_gt = sum(r.n_gt for r in results)
    matched = sum(r.n_matched for r in results)
    iou_sum = float(math.fsum(r.iou_sum for r in results))
    p, r, f = _ratios(matched, n_det, n_gt)
    return EvalResult(t, p, r, f, n_det, n_gt, matched, iou_sum / matched if matched else 0.0, iou_sum)


def random_scene(rng, image_size=(512, 512), n_instances=(1, 8), aspect=(1.0, 20.0),
                 short_side=(16.0, 40.0), min_aspect_first: float | None = None,
                 margin: float = 8.0, gap: float = 8.0, max_tries: int = 2000):
    """Non-overlapping rotated rectangles inside the image.

    With ``min_aspect_first`` the first instance has at least that aspect
    ratio. Angles are uniform in ``[-pi/4, pi/4)``.
    """
    H, W = image_size
    target = int(rng.integers(n_instances[0], n_instances[1] + 1))
    rects: list[RotatedRect] = []
    tries = 0
    while len(rects) < target and tries < max_tries:
        tries += 1
        lo_aspect = aspect[0]
        if min_aspect_first is not None and not rects:
            lo_aspect = max(lo_aspect, min_aspect_first)
        a = rng.uniform(lo_aspect, aspect[1])
        s = rng.uniform(*short_side)
        length = s * a
        if length > 0.9 * min(H, W):
            length = 0.9 * min(H, W)
            if length / s < lo_aspect:
                continue
        theta = rng.uniform(-math.pi / 4, math.pi / 4)
        c, sn = abs(math.cos(theta)), abs(math.sin(theta))
        ex = (length * c + s * sn) / 2
        ey = (length * sn + s * c) / 2
        if 2 * (ex + margin) >= W or 2 * (ey + margin) >= H:
            continue
        cx = rng.uniform(margin + ex, W - margin - ex)
        cy = rng.uniform(margin + ey, H - margin - ey)
        r = RotatedRect(cx, cy, length, s, theta)
        grown = RotatedRect(cx, cy, r.width + 2 * gap, r.height + 2 * gap, r.theta).to_quad()
        if any(quad_iou(grown, RotatedRect(o.cx, o.cy, o.width + 2 * gap, o.height + 2 * gap,
                                           o.theta).to_quad()) > 0 for o in rects):
            continue
        rects.append(r)
    return [TextInstance(r.to_quad()) for r in rects]


def synthetic_candidates(n: int, seed: int = 0, image_size=(1024, 1024), stride: int = 4,
                         noise: NoiseModel | None = None) -> Detections:
    """At least ``n`` row-major candidates decoded from random oracle scenes,
    truncated to exactly ``n``. Used for timing."""
    rng = np.random.default_rng(seed)
    noise = noise or NoiseModel(0.5, 0.05, 0.0, seed)
    parts = []
    total = 0
    offset = 0
    while total < n:
        inst = random_scene(rng, image_size, n_instances=(6, 12), short_side=(24, 64))
        maps = render_oracle_maps(inst, image_size, stride, noise, image_index=len(parts))
        d = decode_maps(maps, 0.5)
        # stack scenes vertically so row-major order is preserved
        d.quads[:, :, 1] += offset
        offset += image_size[0]
        parts.append(d)
        total += len(d)
    quads = np.concatenate([p.quads for p in parts])[:n]
    scores = np.concatenate([p.scores for p in parts])[:n]
    weights = np.concatenate([p.weights for p in parts])[:n]
    return Detections(quads, scores, weights)
