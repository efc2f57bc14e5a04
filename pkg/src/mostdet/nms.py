"""Standard, locality-aware and position-aware NMS over quads.

Candidates travel as :class:`Detections`, a column store of quads, scores
and (left, right, top, bottom) position weights. Single records are
:class:`QuadBox`. The merge scans run in compiled kernels; for identical
inputs the outputs are bit-identical across runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from mostdet import _kernels
from mostdet.geometry import as_quad


@dataclass(frozen=True)
class NmsParams:
    merge_iou: float = 0.2
    final_iou: float = 0.2
    score_thresh: float = 0.8
    epsilon: float = 1e-6
    pa_frame: str = "image"

    def __post_init__(self):
        if self.pa_frame not in ("image", "box"):
            raise ValueError("pa_frame must be 'image' or 'box'")
        for name in ("merge_iou", "final_iou"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")


@dataclass(frozen=True)
class QuadBox:
    quad: np.ndarray
    score: float
    weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    source_pixel: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "quad", as_quad(self.quad))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))


class Detections:
    """Column-oriented batch of quad detections.

    Indexing returns :class:`QuadBox`; ``counts`` records how many raw
    candidates were folded into each entry.
    """

    def __init__(self, quads, scores, weights=None, pixels=None, counts=None):
        self.quads = np.ascontiguousarray(np.asarray(quads, dtype=np.float64).reshape(-1, 4, 2))
        n = len(self.quads)
        self.scores = np.ascontiguousarray(np.asarray(scores, dtype=np.float64).reshape(n))
        self.weights = (np.ones((n, 4)) if weights is None
                        else np.ascontiguousarray(np.asarray(weights, dtype=np.float64).reshape(n, 4)))
        self.pixels = None if pixels is None else np.asarray(pixels, dtype=np.int64).reshape(n, 2)
        self.counts = np.ones(n, np.int64) if counts is None else np.asarray(counts, np.int64)

    @classmethod
    def empty(cls) -> "Detections":
        return cls(np.zeros((0, 4, 2)), np.zeros(0))

    @classmethod
    def from_boxes(cls, boxes: Iterable[QuadBox]) -> "Detections":
        boxes = list(boxes)
        if not boxes:
            return cls.empty()
        pixels = None
        if all(b.source_pixel is not None for b in boxes):
            pixels = [b.source_pixel for b in boxes]
        return cls([b.quad for b in boxes], [b.score for b in boxes],
                   [b.weights for b in boxes], pixels)

    def __len__(self) -> int:
        return len(self.quads)

    def __getitem__(self, i):
        if isinstance(i, (slice, np.ndarray, list)):
            return Detections(self.quads[i], self.scores[i], self.weights[i],
                              None if self.pixels is None else self.pixels[i], self.counts[i])
        px = None if self.pixels is None else tuple(int(v) for v in self.pixels[i])
        return QuadBox(self.quads[i].copy(), float(self.scores[i]),
                       tuple(self.weights[i]), px)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __repr__(self) -> str:
        return f"Detections(n={len(self)})"

    def to_boxes(self) -> list[QuadBox]:
        return list(self)


def _as_detections(candidates) -> Detections:
    if isinstance(candidates, Detections):
        return candidates
    return Detections.from_boxes(candidates)


def weighted_merge(p: QuadBox, q: QuadBox) -> QuadBox:
    """Score-weighted vertex average; scores add. Position weights are
    averaged with the same score weights."""
    sp, sq = p.score, q.score
    tot = sp + sq
    quad = (sp * p.quad + sq * q.quad) / tot
    w = (sp * np.asarray(p.weights) + sq * np.asarray(q.weights)) / tot
    return QuadBox(quad, tot, tuple(w), p.source_pixel)


def position_aware_merge(p: QuadBox, q: QuadBox, epsilon: float = 1e-6) -> QuadBox:
    """Per-side merge: x of the left vertices weighted by L, x of the right
    vertices by R, y of the top vertices by T, y of the bottom vertices by B.
    The weights and the classification scores add."""
    m = np.array(p.quad, dtype=np.float64)
    wp, wq = np.asarray(p.weights), np.asarray(q.weights)
    targets = ((0, (0, 3)), (0, (1, 2)), (1, (0, 1)), (1, (2, 3)))  # (axis, vertices) per L, R, T, B
    for side, (axis, verts) in enumerate(targets):
        a, b = wp[side], wq[side]
        if a + b <= 0:
            a, b = max(a, epsilon), max(b, epsilon)
        for v in verts:
            m[v, axis] = (a * p.quad[v, axis] + b * q.quad[v, axis]) / (a + b)
    return QuadBox(m, p.score + q.score, tuple(wp + wq), p.source_pixel)


def standard_nms(boxes, iou_thresh: float = 0.2) -> Detections:
    """Greedy NMS by descending score, ties broken by input position."""
    dets = _as_detections(boxes)
    if len(dets) == 0:
        return Detections.empty()
    order = np.argsort(-dets.scores, kind="stable")
    keep = _kernels.greedy_nms(dets.quads.reshape(-1, 8), order, float(iou_thresh))
    return dets[keep]


def _scan(candidates, params: NmsParams, position_aware: bool) -> Detections:
    dets = _as_detections(candidates)
    if len(dets) == 0:
        return Detections.empty()
    mode = 0
    if position_aware:
        mode = 2 if params.pa_frame == "box" else 1
    q, s, w, c = _kernels.merge_scan(dets.quads.reshape(-1, 8), dets.scores, dets.weights,
                                     float(params.merge_iou), mode, float(params.epsilon))
    return Detections(q, s, w, counts=c)


def merge_pass(candidates, params: NmsParams | None = None, position_aware: bool = False) -> Detections:
    """Only the row-major merging scan, without the final suppression."""
    return _scan(candidates, params or NmsParams(), position_aware)


def locality_aware_nms(candidates, params: NmsParams | None = None) -> Detections:
    """Row-major score-weighted merging followed by standard NMS."""
    params = params or NmsParams()
    merged = _scan(candidates, params, position_aware=False)
    return _final(merged, params)


def pa_nms(candidates, params: NmsParams | None = None) -> Detections:
    """Row-major position-aware merging followed by standard NMS ranked by
    the accumulated classification score."""
    params = params or NmsParams()
    merged = _scan(candidates, params, position_aware=True)
    return _final(merged, params)


def _final(merged: Detections, params: NmsParams) -> Detections:
    if len(merged) == 0:
        return merged
    order = np.argsort(-merged.scores, kind="stable")
    keep = _kernels.greedy_nms(merged.quads.reshape(-1, 8), order, float(params.final_iou))
    return merged[keep]


VARIANTS = {
    "standard": lambda c, p: standard_nms(c, p.final_iou),
    "locality": locality_aware_nms,
    "position_aware": pa_nms,
}
ALIASES = {"std": "standard", "la": "locality", "pa": "position_aware"}


def run_nms(candidates, params: NmsParams | None = None, variant: str = "position_aware") -> Detections:
    params = params or NmsParams()
    variant = ALIASES.get(variant, variant)
    try:
        fn = VARIANTS[variant]
    except KeyError:
        raise ValueError(f"unknown NMS variant {variant!r}") from None
    return fn(_as_detections(candidates), params)


def warmup() -> None:
    """Compile the kernels ahead of timing-sensitive calls."""
    q = np.array([[0, 0], [4, 0], [4, 2], [0, 2]], dtype=np.float64)
    dets = Detections([q, q + 0.5], [0.9, 0.8], [[1, 1, 1, 1], [1, 1, 1, 1]])
    pa_nms(dets)
    locality_aware_nms(dets)
    standard_nms(dets)


__all__: Sequence[str] = [
    "NmsParams", "QuadBox", "Detections", "weighted_merge", "position_aware_merge",
    "standard_nms", "locality_aware_nms", "pa_nms", "merge_pass", "run_nms", "warmup",
]
