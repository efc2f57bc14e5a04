import math

import numpy as np
import pytest

from mostdet.geometry import decode_rbox, points_in_polygon
from mostdet.sampling import (
    SamplingGrid,
    box_lattice,
    combine_offsets,
    sampled_points,
    tfam_offset_field,
    tfam_offsets,
)


class TestGrid:
    def test_regular_offsets_k3(self):
        np.testing.assert_array_equal(
            SamplingGrid(3).regular_offsets,
            [[-1, -1], [0, -1], [1, -1], [-1, 0], [0, 0], [1, 0], [-1, 1], [0, 1], [1, 1]])

    def test_symmetric(self):
        for k in (1, 3, 5, 7):
            off = SamplingGrid(k).regular_offsets
            np.testing.assert_array_equal(off, -off[::-1])

    @pytest.mark.parametrize("k", [0, 2, -3])
    def test_invalid_k(self, k):
        with pytest.raises(ValueError):
            SamplingGrid(k)


class TestOffsets:
    def test_grid_matching_box_is_zero(self):
        p0 = (12, 7)
        off = tfam_offsets((4, 4, 4, 4, 0.0), p0, SamplingGrid(3), 4)
        assert np.array_equal(off, np.zeros((9, 2)))

    def test_five_by_three_box(self):
        off = tfam_offsets((6, 10, 6, 10, 0.0), (20, 20), SamplingGrid(3), 4)
        np.testing.assert_allclose(off[:, 0].reshape(3, 3), [[-1.5, 0, 1.5]] * 3, atol=1e-12)
        np.testing.assert_allclose(off[:, 1].reshape(3, 3), [[-0.5] * 3, [0] * 3, [0.5] * 3], atol=1e-12)

    def test_points_are_box_lattice(self):
        off = tfam_offsets((6, 10, 6, 10, 0.0), (20, 20), SamplingGrid(3), 4)
        pts = sampled_points((20, 20), SamplingGrid(3), off)
        np.testing.assert_allclose(pts[[0, 2, 8, 6]], [[17.5, 18.5], [22.5, 18.5], [22.5, 21.5], [17.5, 21.5]])

    def test_zero_offsets_regular_grid(self):
        pts = sampled_points((3, 4), SamplingGrid(3), np.zeros((9, 2)))
        np.testing.assert_array_equal(pts, SamplingGrid(3).regular_offsets + [3, 4])

    def test_k1_is_box_center(self):
        g = (2, 14, 6, 2, 0.3)
        off = tfam_offsets(g, (10, 10), SamplingGrid(1), 4)
        pts = sampled_points((10, 10), SamplingGrid(1), off)
        q = decode_rbox((10, 10), g, 4) / 4
        np.testing.assert_allclose(pts, [q.mean(axis=0)], atol=1e-12)

    def test_center_point_offset(self):
        g = (2, 14, 6, 2, -0.4)
        off = tfam_offsets(g, (10, 10), SamplingGrid(3), 4)
        q = decode_rbox((10, 10), g, 4) / 4
        np.testing.assert_allclose(off[4], q.mean(axis=0) - [10, 10], atol=1e-12)

    def test_random_rotated_boxes_contain_samples(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            g = (*rng.uniform(0, 60, 4), rng.uniform(-math.pi / 4, math.pi / 4))
            p0 = rng.uniform(0, 100, 2)
            for k in (1, 3, 5):
                pts = sampled_points(p0, SamplingGrid(k), tfam_offsets(g, p0, SamplingGrid(k), 4))
                assert points_in_polygon(pts, decode_rbox(p0, g, 4) / 4, tol=1e-9).all()

    def test_unit_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            g = (*rng.uniform(0, 60, 4), rng.uniform(-1, 1))
            p0 = rng.integers(0, 100, 2)
            feature = sampled_points(p0, SamplingGrid(3), tfam_offsets(g, p0, SamplingGrid(3), 4))
            image = box_lattice(decode_rbox(p0, g, 4), 3)
            np.testing.assert_allclose(image / 4, feature, atol=1e-9)


class TestField:
    def test_matches_pointwise(self):
        rng = np.random.default_rng(2)
        geo = np.concatenate([rng.uniform(0, 30, (6, 7, 4)), rng.uniform(-0.7, 0.7, (6, 7, 1))], axis=2)
        for k in (1, 3):
            field = tfam_offset_field(geo, 4, SamplingGrid(k))
            assert field.shape == (6, 7, k * k, 2)
            for y in range(6):
                for x in range(7):
                    np.testing.assert_allclose(field[y, x], tfam_offsets(geo[y, x], (x, y), SamplingGrid(k), 4),
                                               atol=1e-12)


class TestCombine:
    def test_even_indices_take_localization(self):
        loc = np.ones((9, 2))
        feat = -np.ones((9, 2))
        out = combine_offsets(loc, feat)
        np.testing.assert_array_equal(out[::2], 1)
        np.testing.assert_array_equal(out[1::2], -1)

    def test_explicit_mask(self):
        out = combine_offsets(np.ones((4, 2)), np.zeros((4, 2)), [False, False, True, True])
        np.testing.assert_array_equal(out[:, 0], [0, 0, 1, 1])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            combine_offsets(np.ones((9, 2)), np.ones((8, 2)))
