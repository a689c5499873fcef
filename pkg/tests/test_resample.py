import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenefuse.resample import bilinear_resize, minmax_normalize, trilinear_resize


def reference_bilinear(src, out_h, out_w):
    """Independent per-pixel evaluation of the half-pixel rule."""
    src = np.asarray(src, dtype=np.float64)
    h, w = src.shape[:2]
    out = np.empty((out_h, out_w) + src.shape[2:])
    for r in range(out_h):
        sy = min(max((r + 0.5) * h / out_h - 0.5, 0.0), h - 1.0)
        y0 = int(np.floor(sy))
        y1 = min(y0 + 1, h - 1)
        fy = sy - y0
        for c in range(out_w):
            sx = min(max((c + 0.5) * w / out_w - 0.5, 0.0), w - 1.0)
            x0 = int(np.floor(sx))
            x1 = min(x0 + 1, w - 1)
            fx = sx - x0
            top = (1 - fx) * src[y0, x0] + fx * src[y0, x1]
            bot = (1 - fx) * src[y1, x0] + fx * src[y1, x1]
            out[r, c] = (1 - fy) * top + fy * bot
    return out


class TestBilinear:
    def test_identity_is_exact_copy(self, rng):
        src = rng.standard_normal((5, 7, 3)).astype(np.float32)
        out = bilinear_resize(src, 5, 7)
        np.testing.assert_array_equal(out, src)
        assert out is not src

    def test_hand_vector(self):
        # [0, 4] upsampled 1x2 -> 1x4; interior taps blend 0.75/0.25
        out = bilinear_resize(np.array([[0.0, 4.0]]), 1, 4)
        np.testing.assert_array_equal(out, [[0.0, 1.0, 3.0, 4.0]])

    def test_constant_plane(self, rng):
        src = np.full((4, 6), 3.25)
        out = bilinear_resize(src, 9, 5)
        np.testing.assert_array_equal(out, np.full((9, 5), 3.25))

    def test_matches_reference_oracle(self, rng):
        for _ in range(5):
            h, w = rng.integers(1, 9, size=2)
            oh, ow = rng.integers(1, 14, size=2)
            src = rng.standard_normal((h, w, 2))
            got = bilinear_resize(src, oh, ow)
            np.testing.assert_allclose(got, reference_bilinear(src, oh, ow),
                                       rtol=0, atol=1e-12)

    def test_monotonicity_bounds(self, rng):
        src = rng.uniform(-5, 5, size=(6, 8, 3))
        out = bilinear_resize(src, 17, 3)
        for c in range(3):
            assert out[..., c].min() >= src[..., c].min() - 1e-12
            assert out[..., c].max() <= src[..., c].max() + 1e-12

    def test_affine_field_exact_at_interior(self):
        h, w = 6, 9
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        src = 2.0 * xs - 3.0 * ys + 0.5
        oh, ow = 11, 17
        out = bilinear_resize(src, oh, ow)
        sy = (np.arange(oh) + 0.5) * h / oh - 0.5
        sx = (np.arange(ow) + 0.5) * w / ow - 0.5
        interior_r = (sy >= 0) & (sy <= h - 1)
        interior_c = (sx >= 0) & (sx <= w - 1)
        expected = 2.0 * sx[None, :] - 3.0 * sy[:, None] + 0.5
        np.testing.assert_allclose(
            out[np.ix_(interior_r, interior_c)],
            expected[np.ix_(interior_r, interior_c)],
            atol=1e-6,
        )

    def test_nan_propagates(self):
        src = np.array([[1.0, np.nan], [1.0, 1.0]])
        out = bilinear_resize(src, 4, 4)
        assert np.isnan(out).any()
        assert np.isfinite(out).any()

    @pytest.mark.parametrize("oh,ow", [(0, 4), (4, 0)])
    def test_zero_output_rejected(self, oh, ow):
        with pytest.raises(ValueError):
            bilinear_resize(np.ones((2, 2)), oh, ow)


class TestTrilinear:
    def test_identity(self, rng):
        src = rng.standard_normal((3, 4, 5, 2))
        np.testing.assert_array_equal(trilinear_resize(src, (3, 4, 5)), src)

    def test_constant(self):
        src = np.full((2, 3, 4), -1.5)
        out = trilinear_resize(src, (5, 5, 5))
        np.testing.assert_array_equal(out, np.full((5, 5, 5), -1.5))

    def test_linear_field_upsample(self):
        # f(x, y, z) = x + 2y + 3z sampled at the 2x2x2 voxel centers,
        # upsampled x2: interior samples must match the analytic field
        xs, ys, zs = np.mgrid[0:2, 0:2, 0:2].astype(np.float64)
        src = xs + 2.0 * ys + 3.0 * zs
        out = trilinear_resize(src, (4, 4, 4))
        s = (np.arange(4) + 0.5) * 2 / 4 - 0.5
        interior = (s >= 0) & (s <= 1)
        gx, gy, gz = np.meshgrid(s, s, s, indexing="ij")
        expected = gx + 2.0 * gy + 3.0 * gz
        sel = np.ix_(interior, interior, interior)
        np.testing.assert_allclose(out[sel], expected[sel], atol=1e-6)

    def test_zero_output_rejected(self):
        with pytest.raises(ValueError):
            trilinear_resize(np.ones((2, 2, 2)), (2, 0, 2))

    def test_bounds(self, rng):
        src = rng.uniform(0, 1, size=(3, 3, 3))
        out = trilinear_resize(src, (7, 2, 9))
        assert out.min() >= src.min() - 1e-12
        assert out.max() <= src.max() + 1e-12


class TestMinMax:
    def test_hand_case(self):
        out = minmax_normalize(np.array([[2.0, 4.0, 6.0]]))
        np.testing.assert_array_equal(out, [[0.0, 0.5, 1.0]])

    def test_constant_degenerate(self):
        out = minmax_normalize(np.array([[5.0, 5.0]]))
        np.testing.assert_array_equal(out, [[0.0, 0.0]])

    def test_range_endpoints(self, rng):
        src = rng.uniform(-4, 9, size=(6, 6))
        out = minmax_normalize(src)
        assert out.min() == 0.0
        assert out.max() == 1.0

    def test_idempotent_on_unit_span(self, rng):
        src = rng.uniform(0, 1, size=(5, 5))
        src.ravel()[0] = 0.0
        src.ravel()[1] = 1.0
        once = minmax_normalize(src)
        np.testing.assert_allclose(minmax_normalize(once), once, atol=1e-12)

    def test_invalid_entries_ignored_and_kept_nan(self):
        src = np.array([[np.nan, 2.0], [4.0, 6.0]])
        out = minmax_normalize(src)
        assert np.isnan(out[0, 0])
        np.testing.assert_array_equal(out.ravel()[1:], [0.0, 0.5, 1.0])

    def test_no_valid_rejected(self):
        with pytest.raises(ValueError):
            minmax_normalize(np.full((2, 2), np.nan))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=2, max_size=40),
       st.integers(min_value=1, max_value=50))
def test_bilinear_output_within_input_range(values, out_w):
    src = np.array([values])
    out = bilinear_resize(src, 1, out_w)
    assert out.min() >= src.min() - 1e-9 * max(1, abs(src.min()))
    assert out.max() <= src.max() + 1e-9 * max(1, abs(src.max()))
