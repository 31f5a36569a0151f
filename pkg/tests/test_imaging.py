"""Bilinear sampling primitive tests."""

import numpy as np
import pytest

from dualscreen.imaging import bilinear_sample, resize, sample_region


class TestBilinearSample:
    def test_pixel_centres_exact(self):
        rng = np.random.default_rng(0)
        img = rng.random((6, 7, 3))
        xs, ys = np.meshgrid(np.arange(7) + 0.5, np.arange(6) + 0.5)
        out = bilinear_sample(img, xs, ys)
        np.testing.assert_allclose(out, img, atol=1e-12)

    def test_midpoint_average(self):
        img = np.zeros((1, 2, 1))
        img[0, 0, 0] = 1.0
        img[0, 1, 0] = 3.0
        out = bilinear_sample(img, np.array(1.0), np.array(0.5))
        assert out[0] == pytest.approx(2.0)

    def test_border_replication(self):
        img = np.arange(4, dtype=np.float64).reshape(2, 2, 1)
        out = bilinear_sample(img, np.array(-5.0), np.array(-5.0))
        assert out[0] == 0.0
        out = bilinear_sample(img, np.array(50.0), np.array(50.0))
        assert out[0] == 3.0

    def test_constant_image(self):
        img = np.full((5, 5, 2), 0.42)
        rng = np.random.default_rng(1)
        out = bilinear_sample(img, rng.uniform(-2, 7, 20), rng.uniform(-2, 7, 20))
        np.testing.assert_allclose(out, 0.42, atol=1e-12)


class TestSampleRegion:
    def test_identity_region(self):
        rng = np.random.default_rng(2)
        img = rng.random((8, 10, 3))
        out = sample_region(img, 0.0, 0.0, 10.0, 8.0, 8, 10)
        np.testing.assert_allclose(out, img, atol=1e-12)

    def test_shape_contract(self):
        img = np.zeros((8, 10, 3))
        assert sample_region(img, 1.0, 2.0, 5.5, 7.0, 4, 6).shape == (4, 6, 3)

    def test_empty_region_rejected(self):
        img = np.zeros((4, 4, 1))
        with pytest.raises(ValueError):
            sample_region(img, 2.0, 1.0, 2.0, 3.0, 2, 2)
        with pytest.raises(ValueError):
            sample_region(img, 0.0, 0.0, 2.0, 2.0, 0, 2)


class TestResize:
    def test_identity(self):
        rng = np.random.default_rng(3)
        img = rng.random((6, 6, 3))
        out = resize(img, 6, 6)
        np.testing.assert_array_equal(out, img)
        assert out is not img  # defensive copy

    def test_constant_resize(self):
        img = np.full((10, 12, 3), 0.3)
        out = resize(img, 7, 5)
        assert out.shape == (7, 5, 3)
        np.testing.assert_allclose(out, 0.3, atol=1e-12)

    def test_downsample_then_upsample_preserves_mean_roughly(self):
        rng = np.random.default_rng(4)
        img = rng.random((16, 16, 1))
        small = resize(img, 8, 8)
        assert abs(small.mean() - img.mean()) < 0.05
