"""
    test_imageproc.py
    ~~~~~~~~~~~~~~~~~

    Unit tests for the pixel-level primitives in scancolor.imageproc
"""

import unittest

import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from scancolor.imageproc import (
    Block,
    Image,
    bilinear_sample,
    block_mse,
    equalize_value_channel,
    extract_block,
    hsv_to_rgb,
    match_error,
    rgb_to_hsv,
    rgb_to_ycbcr,
    value_bins,
)
from scancolor.utils import DimensionMismatchError
from utils import noise_image

int_blocks = st.integers(1, 4).flatmap(
    lambda half: hnp.arrays(
        np.int64, (2 * half - 1, 2 * half - 1, 3), elements=st.integers(-255, 255)
    )
)
offsets = hnp.arrays(np.int64, (3,), elements=st.integers(-255, 255))


class TestImage(unittest.TestCase):
    def test_range(self):
        with self.assertRaises(ValueError):
            Image(np.full((2, 2, 3), 1.5))

    def test_shape(self):
        with self.assertRaises(DimensionMismatchError):
            Image(np.zeros((2, 2)))
        img = Image(np.zeros((4, 5, 3)))
        self.assertEqual((img.height, img.width), (4, 5))

    def test_block_means(self):
        samples = np.zeros((3, 3, 3))
        samples[..., 0] = 9.0
        samples[1, 1, 2] = 9.0
        block = Block(samples)
        self.assertEqual(block.N, 3)
        self.assertEqual(block.mean_Y, 9.0)
        self.assertEqual(block.mean_Cb, 0.0)
        self.assertEqual(block.mean_Cr, 1.0)

    def test_block_not_square(self):
        with self.assertRaises(DimensionMismatchError):
            Block(np.zeros((3, 5, 3)))


class TestHSV(unittest.TestCase):
    def test_red(self):
        np.testing.assert_allclose(rgb_to_hsv([1.0, 0.0, 0.0]), [0.0, 1.0, 1.0])

    def test_green_hue_degrees(self):
        self.assertAlmostEqual(rgb_to_hsv([0.0, 1.0, 0.0])[0], 120.0)

    def test_gray(self):
        hsv = rgb_to_hsv([0.3, 0.3, 0.3])
        self.assertEqual(hsv[1], 0.0)
        self.assertAlmostEqual(hsv[2], 0.3)

    def test_round_trip(self):
        rgb = np.random.default_rng(0).uniform(0, 1, size=(1000, 3))
        self.assertLess(np.max(np.abs(hsv_to_rgb(rgb_to_hsv(rgb)) - rgb)), 1e-6)

    def test_value_bins(self):
        np.testing.assert_array_equal(
            value_bins(np.array([0.0, 0.25, 0.999, 1.0])), [0, 64, 255, 255]
        )


class TestEqualize(unittest.TestCase):
    def test_two_levels(self):
        pixels = np.full((4, 4, 3), 0.25)
        pixels[:, 2:] = 0.75
        out = equalize_value_channel(Image(pixels))
        np.testing.assert_allclose(out.pixels[:, :2], 0.5)
        np.testing.assert_allclose(out.pixels[:, 2:], 1.0)

    def test_constant_unchanged(self):
        img = Image(np.full((3, 3, 3), 0.4))
        self.assertIs(equalize_value_channel(img), img)

    def test_keeps_hue_and_saturation(self):
        rng = np.random.default_rng(5)
        img = Image(rng.uniform(0.05, 0.95, size=(20, 20, 3)))
        before = rgb_to_hsv(img.pixels)
        after = rgb_to_hsv(equalize_value_channel(img).pixels)
        np.testing.assert_allclose(after[..., 1], before[..., 1], atol=1e-9)
        np.testing.assert_allclose(after[..., 0], before[..., 0], atol=1e-6)

    def test_nearly_idempotent(self):
        img = Image(noise_image(np.random.default_rng(8), 32, 32))
        once = equalize_value_channel(img)
        twice = equalize_value_channel(once)
        v1 = rgb_to_hsv(once.pixels)[..., 2]
        v2 = rgb_to_hsv(twice.pixels)[..., 2]
        self.assertLessEqual(np.max(np.abs(v2 - v1)), 1.0 / 256 + 1e-9)

    def test_empty(self):
        with self.assertRaises(DimensionMismatchError):
            equalize_value_channel(Image(np.zeros((0, 0, 3))))


class TestYCbCr(unittest.TestCase):
    def test_black_white(self):
        np.testing.assert_allclose(rgb_to_ycbcr([0.0, 0.0, 0.0]), [16, 128, 128])
        np.testing.assert_allclose(rgb_to_ycbcr([1.0, 1.0, 1.0]), [235, 128, 128])

    def test_achromatic(self):
        out = rgb_to_ycbcr(np.array([[0.2] * 3, [0.7] * 3]))
        np.testing.assert_allclose(out[:, 1:], 128.0)


class TestSampling(unittest.TestCase):
    def setUp(self):
        self.array = np.arange(20, dtype=np.float64).reshape(4, 5)

    def test_integer_positions(self):
        out = bilinear_sample(self.array, np.array([0.0, 4.0, 2.0]), np.array([0.0, 3.0, 1.0]))
        np.testing.assert_allclose(out, [0.0, 19.0, 7.0])

    def test_interpolates(self):
        out = bilinear_sample(self.array, np.array([0.5]), np.array([1.5]))
        np.testing.assert_allclose(out, [(5 + 6 + 10 + 11) / 4.0])

    def test_clamps(self):
        out = bilinear_sample(self.array, np.array([-3.0, 10.0]), np.array([0.0, 3.0]))
        np.testing.assert_allclose(out, [0.0, 19.0])

    def test_channels(self):
        image = np.stack([self.array, 2 * self.array, 3 * self.array], axis=-1)
        out = bilinear_sample(image, np.zeros((2, 2)) + 1.0, np.zeros((2, 2)) + 2.0)
        self.assertEqual(out.shape, (2, 2, 3))
        np.testing.assert_allclose(out[0, 0], [11.0, 22.0, 33.0])

    def test_extract_block(self):
        image = np.stack([self.array] * 3, axis=-1)
        block = extract_block(image, 2.0, 1.0, 3)
        np.testing.assert_allclose(block.samples[..., 0], self.array[0:3, 1:4])

    def test_extract_block_even(self):
        with self.assertRaises(DimensionMismatchError):
            extract_block(np.zeros((5, 5, 3)), 2.0, 2.0, 4)


class TestBlockMSE(unittest.TestCase):
    def test_checkerboard(self):
        source = Block(np.zeros((3, 3, 3)))
        pattern = np.where((np.add.outer(np.arange(3), np.arange(3)) % 2) == 0, 9.0, 0.0)
        target = Block(np.repeat(pattern[:, :, np.newaxis], 3, axis=2))
        np.testing.assert_allclose(block_mse(source, target), [20.0, 20.0, 20.0])

    def test_size_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            block_mse(Block(np.zeros((3, 3, 3))), Block(np.zeros((5, 5, 3))))

    @settings(max_examples=200, deadline=None)
    @given(int_blocks, offsets)
    def test_brightness_invariance(self, samples, k):
        source = Block(samples.astype(np.float64))
        target = Block((samples + k).astype(np.float64))
        np.testing.assert_array_equal(block_mse(source, target), [0.0, 0.0, 0.0])

    @settings(max_examples=100, deadline=None)
    @given(int_blocks, int_blocks)
    def test_symmetric_nonnegative(self, a, b):
        if a.shape != b.shape:
            return
        ab = block_mse(Block(a), Block(b))
        ba = block_mse(Block(b), Block(a))
        self.assertTrue(np.all(ab >= 0))
        np.testing.assert_allclose(ab, ba)


class TestMatchError(unittest.TestCase):
    def test_examples(self):
        self.assertEqual(match_error([0.0, 0.0, 0.0]), 0.0)
        self.assertEqual(match_error([3.0, 6.0, 9.0]), 6.0)

    @given(st.lists(st.floats(0, 1e6), min_size=3, max_size=3), st.permutations(range(3)))
    def test_permutation_invariant(self, mse, order):
        permuted = [mse[i] for i in order]
        self.assertAlmostEqual(match_error(mse), match_error(permuted), delta=1e-6)
