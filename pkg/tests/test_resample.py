"""Interpolation operators against directly-evaluated kernel formulas."""

import numpy as np
import pytest

from cdtk.resample import cubic_weight, resample_matrix, resize2d


def reference_bicubic(img, out_h, out_w):
    """Independent scalar bicubic: direct kernel evaluation, edge clamp."""
    in_h, in_w = img.shape[:2]
    out = np.zeros((out_h, out_w) + img.shape[2:])
    for i in range(out_h):
        sy = (i + 0.5) * in_h / out_h - 0.5
        by = int(np.floor(sy))
        for j in range(out_w):
            sx = (j + 0.5) * in_w / out_w - 0.5
            bx = int(np.floor(sx))
            acc = 0.0
            for dy in (-1, 0, 1, 2):
                for dx in (-1, 0, 1, 2):
                    wy = cubic_weight(sy - by - dy)
                    wx = cubic_weight(sx - bx - dx)
                    yy = min(max(by + dy, 0), in_h - 1)
                    xx = min(max(bx + dx, 0), in_w - 1)
                    acc = acc + wy * wx * img[yy, xx]
            out[i, j] = acc
    return out


class TestMatrices:
    @pytest.mark.parametrize("kind", ["nearest", "bilinear", "bicubic"])
    def test_same_size_is_identity(self, kind):
        w = resample_matrix(6, 6, kind)
        assert np.allclose(w, np.eye(6), atol=1e-12)

    @pytest.mark.parametrize("kind", ["nearest", "bilinear", "bicubic"])
    def test_rows_sum_to_one(self, kind):
        for pair in [(4, 9), (9, 4), (5, 5), (3, 11)]:
            w = resample_matrix(*pair, kind)
            assert np.allclose(w.sum(axis=1), 1.0, atol=1e-12)

    def test_nearest_downsample_picks_top_left(self):
        w = resample_matrix(4, 2, "nearest")
        assert np.array_equal(np.argmax(w, axis=1), [0, 2])

    def test_bad_kind_and_extent(self):
        with pytest.raises(ValueError):
            resample_matrix(4, 4, "lanczos")
        with pytest.raises(ValueError):
            resample_matrix(0, 4, "bilinear")


class TestResize:
    def test_constant_stays_constant(self):
        img = np.full((5, 7, 3), 0.37)
        for kind in ("nearest", "bilinear", "bicubic"):
            out = resize2d(img, 11, 4, kind)
            assert np.allclose(out, 0.37, atol=1e-12), kind

    def test_checkerboard_nearest_halving(self):
        board = np.indices((4, 4)).sum(axis=0) % 2
        out = resize2d(board.astype(float), 2, 2, "nearest")
        # top-left of each 2x2 block
        expected = board[::2, ::2]
        assert np.array_equal(out, expected)

    def test_bicubic_matches_reference_on_probe_pixels(self):
        ramp = np.array([[0.0, 1.0], [2.0, 3.0]])
        out = resize2d(ramp, 4, 4, "bicubic")
        ref = reference_bicubic(ramp, 4, 4)
        probes = [(0, 0), (0, 3), (1, 1), (1, 2), (2, 0), (2, 3), (3, 1), (3, 3)]
        for y, x in probes:
            assert abs(out[y, x] - ref[y, x]) < 1e-9

    def test_bicubic_matches_reference_random(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(size=(5, 4, 2))
        out = resize2d(img, 9, 7, "bicubic")
        ref = reference_bicubic(img, 9, 7)
        assert np.allclose(out, ref, atol=1e-9)

    def test_bilinear_known_midpoints(self):
        img = np.array([[0.0, 1.0]])
        out = resize2d(img, 1, 4, "bilinear")
        # centers at src = -0.25, 0.25, 0.75, 1.25 -> clamped linear
        assert np.allclose(out, [[0.0, 0.25, 0.75, 1.0]], atol=1e-12)
