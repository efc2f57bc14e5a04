"""Training objectives with analytic gradients.

Every function returns a :class:`LossValue` whose ``grad`` has the shape of
the prediction it differentiates. Geometry grids are ``(h, w, 5)`` with
channels (top, right, bottom, left, theta); position-sensitive grids are
``(h, w, 4)``. Masks are boolean ``(h, w)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

IOU_SMOOTH = 1.0
BCE_EPS = 1e-7
OHEM_FALLBACK_NEGATIVES = 100


@dataclass
class LossValue:
    value: float
    grad: np.ndarray | dict
    components: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LossWeights:
    lambda_gc: float = 1.0
    lambda_gr: float = 1.0
    lambda_p: float = 1.0
    lambda_i: float = 1.0
    lambda_theta: float = 20.0

    def __post_init__(self):
        for name, v in vars(self).items():
            if v < 0:
                raise ValueError(f"{name} must be non-negative")


def _iou_terms(pred, gt, smooth):
    """Per-sample ``-log((I+s)/(U+s))`` and its gradient w.r.t. the four
    predicted distances. ``pred``/``gt`` are ``(n, 4)`` (t, r, b, l)."""
    pt, pr, pb, pl = pred.T
    gt_, gr, gb, gl = gt.T
    # ties take the predicted branch
    it, ir, ib, il = pt <= gt_, pr <= gr, pb <= gb, pl <= gl
    h_i = np.where(it, pt, gt_) + np.where(ib, pb, gb)
    w_i = np.where(il, pl, gl) + np.where(ir, pr, gr)
    inter = h_i * w_i
    a_pred = (pt + pb) * (pl + pr)
    a_gt = (gt_ + gb) * (gl + gr)
    union = a_pred + a_gt - inter
    term = np.log(union + smooth) - np.log(inter + smooth)

    d_inter = np.stack([w_i * it, h_i * ir, w_i * ib, h_i * il], axis=1)
    d_apred = np.stack([pl + pr, pt + pb, pl + pr, pt + pb], axis=1)
    d_union = d_apred - d_inter
    grad = d_union / (union + smooth)[:, None] - d_inter / (inter + smooth)[:, None]
    return term, grad


def iou_loss(pred, gt, positives, smooth: float = IOU_SMOOTH) -> LossValue:
    """Mean over positives of ``-log IoU`` on box-local distances."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mask = np.asarray(positives, dtype=bool)
    grad = np.zeros_like(pred)
    n = int(mask.sum())
    if n == 0:
        return LossValue(0.0, grad)
    term, g = _iou_terms(pred[mask][:, :4], gt[mask][:, :4], smooth)
    grad[mask, :4] = g / n
    return LossValue(float(term.sum() / n), grad)


def instance_iou_loss(pred, gt, positives, instance_id, smooth: float = IOU_SMOOTH) -> LossValue:
    """IoU loss averaged within each instance, then across instances."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mask = np.asarray(positives, dtype=bool)
    grad = np.zeros_like(pred)
    ids = np.asarray(instance_id)[mask]
    if ids.size == 0:
        return LossValue(0.0, grad)
    uniq, inverse, counts = np.unique(ids, return_inverse=True, return_counts=True)
    n_inst = len(uniq)
    term, g = _iou_terms(pred[mask][:, :4], gt[mask][:, :4], smooth)
    scale = 1.0 / (n_inst * counts[inverse])
    per_instance = np.bincount(inverse, weights=term) / counts
    grad[mask, :4] = g * scale[:, None]
    return LossValue(float(per_instance.sum() / n_inst), grad)


def angle_loss(pred_theta, gt_theta, positives) -> LossValue:
    pred_theta = np.asarray(pred_theta, dtype=np.float64)
    mask = np.asarray(positives, dtype=bool)
    grad = np.zeros_like(pred_theta)
    n = int(mask.sum())
    if n == 0:
        return LossValue(0.0, grad)
    diff = pred_theta[mask] - np.asarray(gt_theta, dtype=np.float64)[mask]
    grad[mask] = np.sin(diff) / n
    return LossValue(float(np.sum(1.0 - np.cos(diff)) / n), grad)


def geometry_loss(pred, gt, positives, instance_id, weights: LossWeights | None = None,
                  smooth: float = IOU_SMOOTH) -> LossValue:
    """``L_iou + lambda_i * L_ins_iou + lambda_theta * L_theta``."""
    weights = weights or LossWeights()
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    plain = iou_loss(pred, gt, positives, smooth)
    inst = instance_iou_loss(pred, gt, positives, instance_id, smooth)
    ang = angle_loss(pred[..., 4], gt[..., 4], positives)
    grad = plain.grad + weights.lambda_i * inst.grad
    grad[..., 4] += weights.lambda_theta * ang.grad
    value = plain.value + weights.lambda_i * inst.value + weights.lambda_theta * ang.value
    return LossValue(value, grad, {"iou": plain.value, "ins_iou": inst.value, "angle": ang.value})


def ohem_selection(pred_score, gt_score, train_mask, neg_pos_ratio: int = 3) -> np.ndarray:
    """Boolean mask of pixels entering the score loss: all trainable
    positives plus the hardest trainable negatives."""
    p = np.clip(np.asarray(pred_score, dtype=np.float64), BCE_EPS, 1 - BCE_EPS)
    g = np.asarray(gt_score) > 0
    m = np.asarray(train_mask) > 0
    pos = g & m
    neg = ~g & m
    n_pos = int(pos.sum())
    n_neg_avail = int(neg.sum())
    n_neg = min(neg_pos_ratio * n_pos, n_neg_avail) if n_pos else min(OHEM_FALLBACK_NEGATIVES, n_neg_avail)
    sel = pos.copy()
    if n_neg:
        neg_idx = np.flatnonzero(neg)
        neg_loss = -np.log(1 - p.ravel()[neg_idx])
        # hardest first; equal losses keep raster order
        hardest = neg_idx[np.argsort(-neg_loss, kind="stable")[:n_neg]]
        sel.ravel()[hardest] = True
    return sel


def score_loss_ohem(pred_score, gt_score, train_mask, neg_pos_ratio: int = 3) -> LossValue:
    """Binary cross entropy over the OHEM selection."""
    raw = np.asarray(pred_score, dtype=np.float64)
    p = np.clip(raw, BCE_EPS, 1 - BCE_EPS)
    g = (np.asarray(gt_score) > 0).astype(np.float64)
    sel = ohem_selection(raw, gt_score, train_mask, neg_pos_ratio)
    grad = np.zeros_like(raw)
    n = int(sel.sum())
    if n == 0:
        return LossValue(0.0, grad)
    bce = -(g * np.log(p) + (1 - g) * np.log(1 - p))
    active = sel & (raw > BCE_EPS) & (raw < 1 - BCE_EPS)
    dp = -g / p + (1 - g) / (1 - p)
    grad[active] = dp[active] / n
    return LossValue(float(bce[sel].sum() / n), grad)


def possens_loss(pred, gt, positives) -> LossValue:
    """Smooth-L1 (beta 1) over four channels, normalized by ``4 |positives|``."""
    pred = np.asarray(pred, dtype=np.float64)
    mask = np.asarray(positives, dtype=bool)
    grad = np.zeros_like(pred)
    n = int(mask.sum())
    if n == 0:
        return LossValue(0.0, grad)
    x = pred[mask] - np.asarray(gt, dtype=np.float64)[mask]
    ax = np.abs(x)
    small = ax < 1.0
    value = np.where(small, 0.5 * x * x, ax - 0.5)
    grad[mask] = np.where(small, x, np.sign(x)) / (4 * n)
    return LossValue(float(value.sum() / (4 * n)), grad)


def total_loss(predictions, labels, weights: LossWeights | None = None,
               neg_pos_ratio: int = 3, smooth: float = IOU_SMOOTH) -> LossValue:
    """``L_s + lambda_gc L_gc + lambda_gr L_gr + lambda_p L_p``.

    ``predictions`` is a :class:`mostdet.pipeline.PredictionMaps` (or
    anything with ``score``, ``geometry_coarse``, ``geometry_refined`` and
    ``possens``); ``labels`` a :class:`mostdet.labelgen.LabelMaps`.
    ``grad`` is a dict keyed by those four prediction names.
    """
    weights = weights or LossWeights()
    omega = labels.positives
    refined = predictions.geometry_refined
    if refined is None:
        refined = predictions.geometry_coarse
    ls = score_loss_ohem(predictions.score, labels.score, labels.train_mask, neg_pos_ratio)
    lgc = geometry_loss(predictions.geometry_coarse, labels.geometry, omega,
                        labels.instance_id, weights, smooth)
    lgr = geometry_loss(refined, labels.geometry, omega, labels.instance_id, weights, smooth)
    lp = possens_loss(predictions.possens, labels.possens, omega)
    value = (ls.value + weights.lambda_gc * lgc.value + weights.lambda_gr * lgr.value
             + weights.lambda_p * lp.value)
    grads = {
        "score": ls.grad,
        "geometry_coarse": weights.lambda_gc * lgc.grad,
        "geometry_refined": weights.lambda_gr * lgr.grad,
        "possens": weights.lambda_p * lp.grad,
    }
    if predictions.geometry_refined is None:
        grads["geometry_coarse"] = grads["geometry_coarse"] + grads.pop("geometry_refined")
    return LossValue(value, grads, {"score": ls.value, "geometry_coarse": lgc.value,
                                    "geometry_refined": lgr.value, "possens": lp.value})
