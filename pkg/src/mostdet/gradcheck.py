"""Central finite-difference checks for every loss in :mod:`mostdet.losses`.

Each case builds labels from a random scene, draws predictions away from
the non-differentiable points (``min`` switches, the smooth-L1 knee, OHEM
selection boundaries) and compares analytic gradients with
``(f(x+h) - f(x-h)) / 2h`` at randomly chosen coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from mostdet import losses
from mostdet.labelgen import generate_maps
from mostdet.pipeline import PredictionMaps, random_scene

STEP = 1e-5
REL_TOL = 1e-4


@dataclass
class GradcheckResult:
    name: str
    n_points: int
    max_rel_err: float
    passed: bool


def relative_error(analytic: float, numeric: float, floor: float = 1e-10) -> float:
    scale = max(abs(analytic), abs(numeric))
    if scale < floor:
        return 0.0
    return abs(analytic - numeric) / scale


def central_difference(fn: Callable[[np.ndarray], float], x: np.ndarray, idx: int,
                       h: float = STEP) -> float:
    xp = x.copy()
    xm = x.copy()
    xp.flat[idx] += h
    xm.flat[idx] -= h
    return (fn(xp) - fn(xm)) / (2 * h)


def _labels(rng, size=(256, 256), min_positives=150):
    while True:
        inst = random_scene(rng, size, n_instances=(2, 5), aspect=(1, 6), short_side=(20, 40))
        labels = generate_maps(inst, size, 4)
        pos = labels.positives
        if len(np.unique(labels.instance_id[pos])) >= 2 and pos.sum() >= min_positives:
            return labels


def _away(rng, gt, lo, hi, margin):
    """``gt * U(lo, hi)``, pushed to ``gt + 3 * margin`` where closer than ``margin``."""
    pred = gt * rng.uniform(lo, hi, gt.shape)
    close = np.abs(pred - gt) < margin
    pred[close] = gt[close] + 3 * margin
    return pred


def _predictions(rng, labels):
    pos = labels.positives
    gt = labels.geometry
    coarse = gt.copy()
    refined = gt.copy()
    for g in (coarse, refined):
        g[pos, :4] = _away(rng, gt[pos, :4], 0.6, 1.4, 1e-3)
        g[pos, 4] = gt[pos, 4] + rng.uniform(-0.5, 0.5, pos.sum())
    ps = labels.possens + rng.uniform(-1.6, 1.6, labels.possens.shape)
    knee = np.abs(np.abs(ps - labels.possens) - 1.0) < 1e-3
    ps[knee] += 5e-3
    score = rng.uniform(0.02, 0.98, labels.score.shape)
    return PredictionMaps(score, coarse, ps, refined, labels.stride)


def _run_case(name, fn_value, fn_grad, x, candidates, n_points, rng, is_tie=None):
    grad = fn_grad(x)
    worst = 0.0
    used = 0
    for idx in rng.permutation(candidates):
        if used >= n_points:
            break
        if is_tie is not None and is_tie(x, int(idx)):
            continue
        numeric = central_difference(fn_value, x, int(idx))
        worst = max(worst, relative_error(float(grad.flat[idx]), numeric))
        used += 1
    return GradcheckResult(name, used, worst, used >= n_points and worst < REL_TOL)


def run_gradcheck(n_points: int = 100, seed: int = 0) -> list[GradcheckResult]:
    rng = np.random.default_rng(seed)
    labels = _labels(rng)
    preds = _predictions(rng, labels)
    pos = labels.positives
    gt = labels.geometry
    ids = labels.instance_id
    weights = losses.LossWeights()

    flat_pos = np.flatnonzero(pos)
    dist_idx = (flat_pos[:, None] * 5 + np.arange(4)).ravel()
    geo_idx = (flat_pos[:, None] * 5 + np.arange(5)).ravel()
    ps_idx = (flat_pos[:, None] * 4 + np.arange(4)).ravel()

    results = []
    x = preds.geometry_coarse.copy()

    def case(name, loss_fn, x0, cand, tie=None):
        results.append(_run_case(name, lambda v: loss_fn(v).value, lambda v: loss_fn(v).grad,
                                 x0, cand, n_points, rng, tie))

    case("iou", lambda v: losses.iou_loss(v, gt, pos), x, dist_idx)
    case("instance_iou", lambda v: losses.instance_iou_loss(v, gt, pos, ids), x, dist_idx)
    case("angle", lambda v: losses.angle_loss(v, gt[..., 4], pos), x[..., 4].copy(), flat_pos)
    case("geometry", lambda v: losses.geometry_loss(v, gt, pos, ids, weights), x, geo_idx)
    case("possens", lambda v: losses.possens_loss(v, labels.possens, pos), preds.possens.copy(), ps_idx)

    def score_tie(v, idx):
        base = losses.ohem_selection(v, labels.score, labels.train_mask)
        for s in (STEP, -STEP):
            w = v.copy()
            w.flat[idx] += s
            if not np.array_equal(losses.ohem_selection(w, labels.score, labels.train_mask), base):
                return True
        return False

    sel = np.flatnonzero(losses.ohem_selection(preds.score, labels.score, labels.train_mask))
    case("score_ohem", lambda v: losses.score_loss_ohem(v, labels.score, labels.train_mask),
         preds.score.copy(), sel, score_tie)

    # composite: one flat vector over all four heads
    parts = [("score", preds.score), ("geometry_coarse", preds.geometry_coarse),
             ("geometry_refined", preds.geometry_refined), ("possens", preds.possens)]
    sizes = [p.size for _, p in parts]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    flat = np.concatenate([p.ravel() for _, p in parts])

    def unpack(v):
        arrays = [v[offsets[i]:offsets[i + 1]].reshape(p.shape) for i, (_, p) in enumerate(parts)]
        return PredictionMaps(arrays[0], arrays[1], arrays[3], arrays[2], labels.stride)

    def total_value(v):
        return losses.total_loss(unpack(v), labels, weights).value

    def total_grad(v):
        g = losses.total_loss(unpack(v), labels, weights).grad
        return np.concatenate([g[name].ravel() for name, _ in parts])

    def total_tie(v, idx):
        return idx < offsets[1] and score_tie(v[:offsets[1]].reshape(preds.score.shape), idx)

    cand = np.concatenate([sel, offsets[1] + geo_idx, offsets[2] + geo_idx, offsets[3] + ps_idx])
    results.append(_run_case("total", total_value, total_grad, flat, cand, n_points, rng, total_tie))
    return results
