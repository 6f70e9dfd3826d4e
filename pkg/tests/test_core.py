import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cosal import core


def grid_strategy(max_side=6):
    shapes = st.tuples(st.integers(1, max_side), st.integers(1, max_side))
    return shapes.flatmap(
        lambda s: arrays(np.float64, s, elements=st.floats(0.0, 1.0, allow_nan=False))
    )


class TestResizeBilinear:
    def test_constant_map_stays_exactly_constant(self):
        m = np.full((3, 5), 0.4)
        out = core.resize_bilinear(m, 7, 11)
        assert out.shape == (7, 11)
        assert (out == 0.4).all()

    def test_corner_aligned_1x2_to_1x3(self):
        out = core.resize_bilinear(np.array([[0.0, 1.0]]), 1, 3)
        assert np.array_equal(out, np.array([[0.0, 0.5, 1.0]]))

    def test_identity_resize_is_bitwise_equal(self):
        rng = np.random.default_rng(0)
        m = rng.random((5, 7))
        out = core.resize_bilinear(m, 5, 7)
        assert np.array_equal(out, m)

    def test_rejects_empty_output(self):
        with pytest.raises(ValueError):
            core.resize_bilinear(np.zeros((2, 2)), 0, 3)

    @settings(max_examples=60, deadline=None)
    @given(grid_strategy(), st.integers(1, 9), st.integers(1, 9))
    def test_output_within_input_bounds(self, m, out_h, out_w):
        out = core.resize_bilinear(m, out_h, out_w)
        assert out.min() >= m.min() - 0.0
        assert out.max() <= m.max() + 0.0

    def test_upscale_then_corner_values_match(self):
        rng = np.random.default_rng(1)
        m = rng.random((4, 4))
        out = core.resize_bilinear(m, 10, 10)
        assert out[0, 0] == m[0, 0]
        assert out[-1, -1] == m[-1, -1]
        assert out[0, -1] == m[0, -1]

    def test_collapse_to_single_row_samples_center(self):
        m = np.array([[0.0], [0.5], [1.0]])
        out = core.resize_bilinear(m, 1, 1)
        assert out.shape == (1, 1)
        assert out[0, 0] == 0.5


class TestAreaAverageResize:
    def test_constant(self):
        out = core.area_average_resize(np.full((10, 10), 0.25), 3, 3)
        assert np.allclose(out, 0.25, atol=1e-15)

    def test_exact_block_average(self):
        m = np.array([[1.0, 1.0, 0.0, 0.0]])
        out = core.area_average_resize(m, 1, 2)
        assert np.allclose(out, [[1.0, 0.0]])

    def test_preserves_global_mean_for_integer_factor(self):
        rng = np.random.default_rng(2)
        m = rng.random((8, 8))
        out = core.area_average_resize(m, 4, 4)
        assert abs(out.mean() - m.mean()) < 1e-12


class TestMinmaxNormalize:
    def test_affine_rescale(self):
        assert np.array_equal(core.minmax_normalize([[-1.0, 0.0, 1.0]]), [[0.0, 0.5, 1.0]])

    def test_constant_maps_to_zero(self):
        assert (core.minmax_normalize(np.full((2, 3), 7.0)) == 0.0).all()

    def test_direct_arithmetic(self):
        out = core.minmax_normalize(np.array([[2.0, 4.0, 10.0]]))
        assert np.allclose(out, [[0.0, 0.25, 1.0]], atol=1e-15)

    def test_idempotent_on_normalized_nonconstant(self):
        rng = np.random.default_rng(3)
        m = core.minmax_normalize(rng.random((4, 4)))
        assert np.array_equal(core.minmax_normalize(m), m)

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            core.minmax_normalize(np.array([[np.nan, 1.0]]))


class TestBinarize:
    def test_tie_goes_to_foreground(self):
        out = core.binarize(np.array([[0.2, 0.5, 0.8]]), 0.5)
        assert np.array_equal(out, [[0, 1, 1]])

    def test_threshold_zero_is_all_foreground(self):
        rng = np.random.default_rng(4)
        assert core.binarize(rng.random((3, 3)), 0.0).all()

    def test_direct_comparison(self):
        assert np.array_equal(core.binarize(np.array([[0.3, 0.7]]), 0.71), [[0, 0]])

    def test_rejects_out_of_range_threshold(self):
        with pytest.raises(ValueError):
            core.binarize(np.zeros((1, 1)), 1.5)

    @settings(max_examples=60, deadline=None)
    @given(grid_strategy(), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_monotone_in_threshold(self, m, t1, t2):
        lo, hi = min(t1, t2), max(t1, t2)
        fg_hi = core.binarize(m, hi).astype(bool)
        fg_lo = core.binarize(m, lo).astype(bool)
        assert (fg_lo | ~fg_hi).all()  # foreground(hi) subset of foreground(lo)


class TestAdaptiveThreshold:
    def test_all_zero(self):
        assert core.adaptive_threshold(np.zeros((4, 4))) == 0.0

    def test_twice_mean(self):
        assert core.adaptive_threshold(np.full((2, 2), 0.3)) == pytest.approx(0.6, abs=1e-15)

    def test_clamped(self):
        assert core.adaptive_threshold(np.full((2, 2), 0.8)) == 1.0


class TestTypes:
    def test_scalar_map_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            core.ScalarMap(np.array([[1.5]]))

    def test_scalar_map_rejects_nan(self):
        with pytest.raises(ValueError):
            core.ScalarMap(np.array([[np.nan]]))

    def test_scalar_map_is_immutable(self):
        m = core.ScalarMap(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            m.values[0, 0] = 1.0

    def test_label_mask_requires_contiguous_labels(self):
        with pytest.raises(ValueError):
            core.LabelMask(np.array([[0, 2], [2, 0]]))

    def test_label_mask_from_raw_relabels(self):
        m = core.LabelMask.from_raw_labels(np.array([[0, 5], [9, 5]]))
        assert np.array_equal(m.labels, [[0, 1], [2, 1]])
        assert m.n_instances == 2

    def test_label_mask_binary_collapse(self):
        m = core.LabelMask(np.array([[0, 1], [2, 0]]))
        assert np.array_equal(m.binary(), [[False, True], [True, False]])

    def test_feature_stack_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            core.FeatureStack(np.full((1, 1, 2), np.inf))


class TestPngIO:
    def test_scalar_map_round_trip_quantized(self, tmp_path):
        rng = np.random.default_rng(5)
        m = rng.random((9, 7))
        path = tmp_path / "m.png"
        core.save_scalar_map(m, path)
        back = core.load_scalar_map(path)
        assert back.shape == m.shape
        assert np.abs(back - m).max() <= 0.5 / 255 + 1e-12
        # a second save/load is lossless
        core.save_scalar_map(back, path)
        assert np.array_equal(core.load_scalar_map(path), back)

    def test_label_mask_round_trip_8bit(self, tmp_path):
        labels = np.array([[0, 1, 2], [2, 1, 0]], np.int32)
        path = tmp_path / "m.png"
        core.save_label_mask(labels, path)
        assert np.array_equal(core.load_label_mask(path).labels, labels)

    def test_label_mask_round_trip_16bit(self, tmp_path):
        labels = np.zeros((4, 4), np.int32)
        for k in range(1, 9):
            labels[(k - 1) // 4, (k - 1) % 4] = k
        labels[labels == 8] = 300  # force 16-bit, then relabel keeps order
        path = tmp_path / "m.png"
        core.save_label_mask(labels, path)
        back = core.load_label_mask(path)
        assert back.n_instances == 8
        assert np.array_equal(back.labels == 8, labels == 300)

    def test_contiguous_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(6)
        labels = rng.integers(0, 4, (16, 16)).astype(np.int32)
        labels = core.LabelMask.from_raw_labels(labels).labels
        path = tmp_path / "m.png"
        core.save_label_mask(labels, path)
        assert np.array_equal(core.load_label_mask(path).labels, labels)
