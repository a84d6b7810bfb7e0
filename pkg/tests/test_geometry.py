import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from pvos.evaluation import format_pct
from pvos.errors import DomainError, ShapeError
from pvos.geometry import (
    CROSS3,
    as_mask,
    boundary_f,
    boundary_map,
    default_tolerance,
    dilate,
    erode,
    iou,
    jf_mean,
    square,
)

masks = st.integers(1, 12).flatmap(
    lambda h: st.integers(1, 12).flatmap(lambda w: arrays(bool, (h, w)))
)
mask_pairs = st.tuples(st.integers(1, 10), st.integers(1, 10)).flatmap(
    lambda s: st.tuples(arrays(bool, s), arrays(bool, s))
)


def block(h, w, y0, x0, bh, bw):
    m = np.zeros((h, w), dtype=bool)
    m[y0 : y0 + bh, x0 : x0 + bw] = True
    return m


class TestIou:
    def test_identical(self):
        m = block(6, 6, 1, 1, 3, 3)
        assert iou(m, m) == 1.0

    def test_disjoint(self):
        assert iou(block(6, 6, 0, 0, 2, 2), block(6, 6, 4, 4, 2, 2)) == 0.0

    def test_grid_example(self):
        a = block(3, 3, 0, 0, 2, 3)
        b = block(3, 3, 1, 0, 2, 3)
        assert iou(a, b) == pytest.approx(1 / 3, abs=0)

    def test_both_empty_is_one(self):
        z = np.zeros((4, 4), bool)
        assert iou(z, z) == 1.0

    def test_one_empty_is_zero(self):
        assert iou(np.zeros((4, 4), bool), block(4, 4, 0, 0, 1, 1)) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            iou(np.zeros((3, 3), bool), np.zeros((3, 4), bool))

    def test_rejects_non_2d(self):
        with pytest.raises(ShapeError):
            as_mask(np.zeros((2, 2, 2), bool))

    @given(mask_pairs)
    def test_matches_oracle_and_symmetric(self, pair):
        a, b = pair
        assert iou(a, b) == oracles.count_iou(a, b)
        assert iou(a, b) == iou(b, a)
        assert 0.0 <= iou(a, b) <= 1.0


class TestMorphology:
    def test_dilate_radius_zero_identity(self):
        m = block(5, 5, 1, 1, 2, 2)
        assert np.array_equal(dilate(m, 0), m)

    def test_dilate_single_pixel(self):
        m = np.zeros((5, 5), bool)
        m[2, 2] = True
        assert np.array_equal(dilate(m, 1), block(5, 5, 1, 1, 3, 3))

    def test_dilate_empty(self):
        assert not dilate(np.zeros((5, 5), bool), 3).any()

    def test_dilate_negative_radius(self):
        with pytest.raises(DomainError):
            dilate(np.zeros((3, 3), bool), -1)

    def test_erode_full_frame_clears_border(self):
        m = np.ones((5, 6), bool)
        assert np.array_equal(erode(m, CROSS3), block(5, 6, 1, 1, 3, 4))

    def test_erode_single_pixel(self):
        m = np.zeros((3, 3), bool)
        m[1, 1] = True
        assert not erode(m).any()

    def test_erode_empty(self):
        assert not erode(np.zeros((3, 3), bool)).any()

    @given(masks, st.integers(0, 3))
    @settings(max_examples=60)
    def test_square_ops_match_oracle(self, m, r):
        assert np.array_equal(dilate(m, r), oracles.square_dilate(m, r))
        assert np.array_equal(erode(m, square(r)), oracles.square_erode(m, r))

    @given(masks)
    def test_cross_erode_matches_oracle(self, m):
        assert np.array_equal(erode(m, CROSS3), oracles.cross_erode(m))

    @given(masks, st.integers(0, 3))
    @settings(max_examples=60)
    def test_dilation_extensive_erosion_antiextensive(self, m, r):
        assert not (m & ~dilate(m, r)).any()
        assert not (erode(m, square(r)) & ~m).any()


class TestBoundary:
    def test_block_has_twelve(self):
        b = boundary_map(block(8, 8, 2, 2, 4, 4))
        assert int(b.sum()) == 12

    def test_single_pixel(self):
        m = np.zeros((3, 3), bool)
        m[0, 2] = True
        assert np.array_equal(boundary_map(m), m)

    def test_empty(self):
        assert not boundary_map(np.zeros((3, 3), bool)).any()

    @given(masks)
    def test_subset_and_oracle(self, m):
        b = boundary_map(m)
        assert not (b & ~m).any()
        assert np.array_equal(b, oracles.boundary(m))
        # nonempty mask always has a nonempty boundary
        assert b.any() == m.any()


class TestBoundaryF:
    def test_perfect(self):
        m = block(10, 10, 2, 2, 4, 4)
        assert boundary_f(m, m, 1) == 1.0

    def test_pred_empty(self):
        assert boundary_f(np.zeros((10, 10), bool), block(10, 10, 2, 2, 4, 4), 1) == 0.0

    def test_both_empty(self):
        z = np.zeros((10, 10), bool)
        assert boundary_f(z, z, 1) == 1.0

    def test_diagonal_shift_within_tolerance(self):
        a = block(12, 12, 2, 2, 5, 5)
        b = block(12, 12, 3, 3, 5, 5)
        assert boundary_f(a, b, 1) == 1.0
        assert boundary_f(a, b, 0) < 1.0

    def test_default_tolerance(self):
        assert default_tolerance(64, 64) == 1
        assert default_tolerance(480, 854) == round(0.008 * np.hypot(480, 854))

    def test_negative_tolerance(self):
        m = block(5, 5, 1, 1, 2, 2)
        with pytest.raises(DomainError):
            boundary_f(m, m, -1)

    @given(mask_pairs, st.integers(0, 3))
    @settings(max_examples=80)
    def test_matches_oracle_and_symmetric(self, pair, tol):
        a, b = pair
        f = boundary_f(a, b, tol)
        assert abs(f - oracles.boundary_f(a, b, tol)) <= 1e-12
        assert f == pytest.approx(boundary_f(b, a, tol), abs=1e-15)
        assert 0.0 <= f <= 1.0


class TestJf:
    def test_examples(self):
        assert jf_mean(1.0, 1.0) == 1.0
        assert jf_mean(0.0, 1.0) == 0.5

    def test_reported_row_rounding(self):
        # J 82.3 and F 82.4 average to 82.35, shown as 82.4 at one decimal.
        v = jf_mean(0.823, 0.824)
        assert v == pytest.approx(0.8235)
        assert format_pct(v) == "82.4"

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            jf_mean(1.2, 0.5)
