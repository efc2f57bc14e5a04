import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mostdet.geometry import quad_iou
from mostdet.nms import (
    Detections,
    NmsParams,
    QuadBox,
    locality_aware_nms,
    merge_pass,
    pa_nms,
    position_aware_merge,
    run_nms,
    standard_nms,
    weighted_merge,
)
from mostdet.pipeline import synthetic_candidates
from oracles import rect_corners


def rect(x0, y0, x1, y1):
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)


def reference_scan(boxes, thresh, position_aware):
    """Row-major merging written directly on QuadBox values."""
    out, last = [], None
    for b in boxes:
        if last is not None and quad_iou(b.quad, last.quad) > thresh:
            last = position_aware_merge(last, b) if position_aware else weighted_merge(last, b)
        else:
            if last is not None:
                out.append(last)
            last = b
    if last is not None:
        out.append(last)
    return out


def random_candidates(rng, n=None, uniform_weights=False):
    """A row-major run of jittered boxes around a few centers."""
    n = n or int(rng.integers(1, 60))
    centers = rng.uniform(0, 200, (3, 2))
    boxes = []
    for _ in range(n):
        c = centers[rng.integers(0, 3)] + rng.normal(0, 2, 2)
        q = rect_corners(c[0], c[1], rng.uniform(20, 60), rng.uniform(8, 16), rng.uniform(-0.3, 0.3))
        s = rng.uniform(0.8, 1.0)
        w = (s,) * 4 if uniform_weights else tuple(rng.uniform(0, 1, 4))
        boxes.append(QuadBox(q, s, w))
    return boxes


class TestWeightedMerge:
    def test_identical(self):
        p = QuadBox(rect(0, 0, 10, 4), 0.7, (0.1, 0.2, 0.3, 0.4))
        m = weighted_merge(p, p)
        np.testing.assert_allclose(m.quad, p.quad)
        assert m.score == pytest.approx(1.4)

    def test_equal_scores_midpoint(self):
        p, q = QuadBox(rect(0, 0, 10, 4), 0.5), QuadBox(rect(2, 2, 12, 6), 0.5)
        np.testing.assert_allclose(weighted_merge(p, q).quad, rect(1, 1, 11, 5))

    def test_score_weighting(self):
        p, q = QuadBox(rect(0, 0, 10, 4), 3.0), QuadBox(rect(4, 0, 14, 4), 1.0)
        assert weighted_merge(p, q).quad[0, 0] == pytest.approx(1.0)


class TestPositionAwareMerge:
    def test_complementary_sides(self):
        p = QuadBox(rect(0, 0, 10, 4), 1.0, (0.9, 0.1, 0.5, 0.5))
        q = QuadBox(rect(1, 0, 11, 4), 1.0, (0.1, 0.9, 0.5, 0.5))
        m = position_aware_merge(p, q)
        np.testing.assert_allclose(m.quad, rect(0.1, 0, 10.9, 4), atol=1e-12)
        np.testing.assert_allclose(m.weights, (1.0, 1.0, 1.0, 1.0))
        assert m.score == 2.0

    def test_uniform_weights_match_weighted_merge(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            s = rng.uniform(0.1, 1)
            p = QuadBox(rect_corners(*rng.uniform(0, 50, 2), 30, 10, rng.uniform(-0.5, 0.5)), s, (0.4,) * 4)
            q = QuadBox(rect_corners(*rng.uniform(0, 50, 2), 30, 10, rng.uniform(-0.5, 0.5)), s, (0.4,) * 4)
            np.testing.assert_allclose(position_aware_merge(p, q).quad, weighted_merge(p, q).quad, atol=1e-12)

    def test_identical_doubles_weights(self):
        p = QuadBox(rect(0, 0, 10, 4), 0.9, (0.1, 0.2, 0.3, 0.4))
        m = position_aware_merge(p, p)
        np.testing.assert_allclose(m.quad, p.quad)
        np.testing.assert_allclose(m.weights, (0.2, 0.4, 0.6, 0.8))

    def test_zero_weights_use_floor(self):
        p = QuadBox(rect(0, 0, 10, 4), 1.0, (0, 0, 0, 0))
        q = QuadBox(rect(2, 0, 12, 4), 1.0, (0, 0, 0, 0))
        m = position_aware_merge(p, q)
        assert np.all(np.isfinite(m.quad))
        np.testing.assert_allclose(m.quad, rect(1, 0, 11, 4))


class TestStandardNms:
    def test_disjoint_kept(self):
        boxes = [QuadBox(rect(0, 0, 5, 5), 0.9), QuadBox(rect(10, 0, 15, 5), 0.8)]
        assert len(standard_nms(boxes, 0.2)) == 2

    def test_higher_score_kept(self):
        boxes = [QuadBox(rect(0, 0, 10, 5), 0.6), QuadBox(rect(1, 0, 11, 5), 0.9)]
        out = standard_nms(boxes, 0.2)
        assert len(out) == 1 and out.scores[0] == 0.9

    def test_chain(self):
        a, b, c = rect(0, 0, 10, 1), rect(3, 0, 13, 1), rect(6, 0, 16, 1)
        t = 0.3
        assert quad_iou(a, b) > t and quad_iou(b, c) > t and quad_iou(a, c) < t
        boxes = [QuadBox(c, 0.7), QuadBox(a, 0.9), QuadBox(b, 0.8)]
        out = standard_nms(boxes, t)
        assert sorted(out.scores.tolist()) == [0.7, 0.9]

    def test_equal_scores_keep_first(self):
        boxes = [QuadBox(rect(1, 0, 11, 5), 0.9), QuadBox(rect(0, 0, 10, 5), 0.9)]
        np.testing.assert_array_equal(standard_nms(boxes, 0.2).quads[0], rect(1, 0, 11, 5))

    def test_empty(self):
        assert len(standard_nms([], 0.2)) == 0


class TestScans:
    def test_empty(self):
        assert len(locality_aware_nms([])) == 0
        assert len(pa_nms([])) == 0

    def test_single(self):
        b = QuadBox(rect(0, 0, 10, 4), 0.9, (0.2, 0.3, 0.4, 0.5))
        for fn in (locality_aware_nms, pa_nms):
            out = fn([b])
            assert len(out) == 1
            np.testing.assert_array_equal(out.quads[0], b.quad)
            assert out.scores[0] == 0.9

    def test_two_disjoint(self):
        boxes = [QuadBox(rect(0, 0, 5, 5), 0.9), QuadBox(rect(20, 0, 25, 5), 0.9)]
        assert len(locality_aware_nms(boxes)) == 2
        assert len(pa_nms(boxes)) == 2

    def test_identical_boxes_accumulate(self):
        q = rect_corners(50, 50, 40, 10, 0.2)
        out = locality_aware_nms([QuadBox(q, 0.85)] * 7)
        assert len(out) == 1
        assert out.scores[0] == pytest.approx(7 * 0.85)
        np.testing.assert_allclose(out.quads[0], q, atol=1e-12)
        assert out.counts[0] == 7

    @pytest.mark.parametrize("position_aware", [False, True])
    def test_kernel_matches_reference(self, position_aware):
        rng = np.random.default_rng(1)
        for _ in range(100):
            boxes = random_candidates(rng)
            got = merge_pass(boxes, NmsParams(), position_aware)
            ref = reference_scan(boxes, 0.2, position_aware)
            assert len(got) == len(ref)
            for i, r in enumerate(ref):
                np.testing.assert_allclose(got.quads[i], r.quad, atol=1e-9)
                np.testing.assert_allclose(got.weights[i], r.weights, atol=1e-9)
                assert got.scores[i] == pytest.approx(r.score, abs=1e-12)

    def test_uniform_weights_reduce_to_locality(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            boxes = random_candidates(rng, uniform_weights=True)
            a, b = pa_nms(boxes), locality_aware_nms(boxes)
            assert len(a) == len(b)
            np.testing.assert_allclose(a.quads, b.quads, rtol=0, atol=1e-9)

    def test_conservation(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            boxes = random_candidates(rng)
            merged = merge_pass(boxes, NmsParams(), position_aware=True)
            np.testing.assert_allclose(merged.weights.sum(axis=0),
                                       np.sum([b.weights for b in boxes], axis=0), rtol=1e-12)
            assert merged.scores.sum() == pytest.approx(sum(b.score for b in boxes), rel=1e-12)
            assert merged.counts.sum() == len(boxes)
            out = pa_nms(boxes)
            assert 1 <= len(out) <= len(boxes)
            assert np.all(out.counts >= 1)

    def test_box_frame_equals_image_frame_when_axis_aligned(self):
        boxes = [QuadBox(rect(x, 0, x + 30, 8), 0.9, tuple(np.random.default_rng(x).uniform(0, 1, 4)))
                 for x in range(6)]
        a = pa_nms(boxes, NmsParams(pa_frame="image"))
        b = pa_nms(boxes, NmsParams(pa_frame="box"))
        np.testing.assert_allclose(a.quads, b.quads, atol=1e-9)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 1000), st.sampled_from(["standard", "locality", "position_aware"]))
    def test_deterministic(self, seed, variant):
        cands = synthetic_candidates(500, seed=seed)
        a, b = run_nms(cands, NmsParams(), variant), run_nms(cands, NmsParams(), variant)
        np.testing.assert_array_equal(a.quads, b.quads)
        np.testing.assert_array_equal(a.scores, b.scores)


class TestFigureFiveScenario:
    def test_position_aware_beats_score_weighting(self):
        gt = rect(0, 0, 11, 4)
        p = QuadBox(rect(0, 0, 10, 4), 0.9, (0.9, 0.1, 0.5, 0.5))
        q = QuadBox(rect(1, 0, 11, 4), 0.9, (0.1, 0.9, 0.5, 0.5))
        pa = pa_nms([p, q])
        la = locality_aware_nms([p, q])
        assert len(pa) == len(la) == 1
        iou_pa, iou_la = quad_iou(pa.quads[0], gt), quad_iou(la.quads[0], gt)
        assert iou_pa == pytest.approx(10.8 / 11)
        assert iou_la == pytest.approx(10 / 11)
        assert iou_pa > iou_la


class TestParamsAndContainer:
    @pytest.mark.parametrize("kw", [{"merge_iou": 0.0}, {"final_iou": 1.0}, {"pa_frame": "world"}])
    def test_invalid_params(self, kw):
        with pytest.raises(ValueError):
            NmsParams(**kw)

    def test_defaults(self):
        p = NmsParams()
        assert (p.merge_iou, p.final_iou, p.score_thresh, p.epsilon) == (0.2, 0.2, 0.8, 1e-6)

    def test_unknown_variant(self):
        with pytest.raises(ValueError, match="unknown NMS variant"):
            run_nms([], NmsParams(), "soft")

    def test_aliases(self):
        boxes = random_candidates(np.random.default_rng(4), 20)
        np.testing.assert_array_equal(run_nms(boxes, NmsParams(), "pa").quads, pa_nms(boxes).quads)
        np.testing.assert_array_equal(run_nms(boxes, NmsParams(), "la").quads, locality_aware_nms(boxes).quads)

    def test_round_trip_boxes(self):
        boxes = [QuadBox(rect(0, 0, 3, 3), 0.5, (0.1, 0.2, 0.3, 0.4), (1, 2))]
        d = Detections.from_boxes(boxes)
        back = d[0]
        np.testing.assert_array_equal(back.quad, boxes[0].quad)
        assert back.weights == boxes[0].weights and back.source_pixel == (1, 2)
        assert len(d[np.array([True])]) == 1
        assert math.isclose(d.to_boxes()[0].score, 0.5)
