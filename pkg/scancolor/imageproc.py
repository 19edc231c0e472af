"""
    imageproc.py
    ~~~~~~~~~~~~

    Image types and pixel-level primitives: HSV conversion and Value-channel
    histogram equalisation for enhancing photographs before SfM, the
    studio-swing YCbCr conversion used for matching, and the mean-subtracted
    block MSE that scores candidate matches.

    All images hold linear RGB reals in [0, 1], row-major, y-down. YCbCr
    values are on the 0-255 scale.
"""

from dataclasses import dataclass

import numpy as np
from matplotlib import colors as mcolors
from scipy import ndimage

from scancolor.utils import DimensionMismatchError

N_BINS = 256

# BT.601 studio swing on a 0-255 scale, rows Y, Cb, Cr
YCBCR_MATRIX = np.array(
    [
        [65.481, 128.553, 24.966],
        [-37.797, -74.203, 112.0],
        [112.0, -93.786, -18.214],
    ]
)
YCBCR_OFFSET = np.array([16.0, 128.0, 128.0])


@dataclass(frozen=True, eq=False)
class Image:
    """
    An RGB image.

    Attributes:
        - pixels (np.ndarray): (height, width, 3) float64 array in [0, 1].
    """

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.array(self.pixels, dtype=np.float64, copy=True)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise DimensionMismatchError(
                "Image pixels must be (height, width, 3), got {}.".format(pixels.shape)
            )
        if pixels.size > 0 and (pixels.min() < 0 or pixels.max() > 1):
            raise ValueError("Image values must lie in [0, 1].")
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]


@dataclass(frozen=True, eq=False)
class Block:
    """
    An N x N block of YCbCr samples with its per-channel means.

    N is the side length, so a block holds N^2 pixels.
    """

    samples: np.ndarray

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64, copy=True)
        if samples.ndim != 3 or samples.shape[0] != samples.shape[1] or samples.shape[2] != 3:
            raise DimensionMismatchError(
                "Block samples must be (N, N, 3), got {}.".format(samples.shape)
            )
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "_means", samples.mean(axis=(0, 1)))

    @property
    def N(self):
        return self.samples.shape[0]

    @property
    def mean_Y(self):
        return float(self._means[0])

    @property
    def mean_Cb(self):
        return float(self._means[1])

    @property
    def mean_Cr(self):
        return float(self._means[2])


def rgb_to_hsv(rgb):
    """
    Converts RGB to hexcone HSV.

    Args:
        - rgb (array-like): (..., 3) values in [0, 1].

    Returns:
        An array of the same shape holding H in degrees [0, 360), S and V in
        [0, 1].
    """
    hsv = mcolors.rgb_to_hsv(np.asarray(rgb, dtype=np.float64))
    hsv[..., 0] *= 360.0
    return hsv


def hsv_to_rgb(hsv):
    """
    Converts hexcone HSV, with H in degrees, back to RGB.

    Args:
        - hsv (array-like): (..., 3) array.

    Returns:
        An array of RGB values in [0, 1].
    """
    hsv = np.array(hsv, dtype=np.float64, copy=True)
    hsv[..., 0] = np.mod(hsv[..., 0], 360.0) / 360.0
    return mcolors.hsv_to_rgb(hsv)


def value_bins(values):
    """
    Histogram bin index of each V value: min(floor(256 * v), 255).
    """
    return np.minimum(np.floor(values * N_BINS), N_BINS - 1).astype(np.int64)


def equalize_value_channel(img):
    """
    Histogram-equalises the Value channel of an image in HSV space, leaving
    hue and saturation untouched.

    A value falling in bin b is replaced by the fraction of pixels whose
    value lies in bins <= b. An image whose values all share one bin has
    nothing to spread and is returned unchanged.

    Args:
        - img (Image): Non-empty input image.

    Returns:
        A new Image.
    """
    if img.pixels.size == 0:
        raise DimensionMismatchError("Cannot equalise an empty image.")

    hsv = rgb_to_hsv(img.pixels)
    bins = value_bins(hsv[..., 2])
    hist = np.bincount(bins.ravel(), minlength=N_BINS)
    if np.count_nonzero(hist) == 1:
        return img

    cdf = np.cumsum(hist) / bins.size
    hsv[..., 2] = cdf[bins]
    return Image(np.clip(hsv_to_rgb(hsv), 0.0, 1.0))


def rgb_to_ycbcr(rgb):
    """
    Converts RGB in [0, 1] to BT.601 studio-swing YCbCr on a 0-255 scale.

    Args:
        - rgb (array-like): (..., 3) array.

    Returns:
        A (..., 3) array of Y, Cb, Cr.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb @ YCBCR_MATRIX.T + YCBCR_OFFSET


def bilinear_sample(array, us, vs):
    """
    Samples an image-like array at real pixel positions with bilinear
    interpolation, clamping to the edge pixels outside the image.

    Args:
        - array (np.ndarray): (height, width) or (height, width, channels).
        - us (array-like): Column coordinates, pixel centres at integers.
        - vs (array-like): Row coordinates, same shape as us.

    Returns:
        An array of shape us.shape (+ (channels,) for 3D input).
    """
    us = np.asarray(us, dtype=np.float64)
    vs = np.asarray(vs, dtype=np.float64)
    coords = np.stack([vs.ravel(), us.ravel()])
    if array.ndim == 2:
        out = ndimage.map_coordinates(array, coords, order=1, mode="nearest")
        return out.reshape(us.shape)
    channels = [
        ndimage.map_coordinates(array[..., c], coords, order=1, mode="nearest")
        for c in range(array.shape[2])
    ]
    return np.stack(channels, axis=-1).reshape(us.shape + (array.shape[2],))


def block_offsets(n):
    """
    Integer offsets -(n // 2) .. n // 2 of an odd block side.
    """
    half = n // 2
    return np.arange(-half, half + 1, dtype=np.float64)


def extract_block(ycbcr, u, v, n):
    """
    Samples an n x n block centred at a real pixel position.

    Samples off the image are clamped to the nearest edge pixel, so blocks
    centred near a silhouette or the image border stay defined.

    Args:
        - ycbcr (np.ndarray): (height, width, 3) YCbCr image.
        - u, v (float): Block centre.
        - n (int): Odd side length.

    Returns:
        A Block.
    """
    if n < 1 or n % 2 == 0:
        raise DimensionMismatchError("Block side must be odd, got {}.".format(n))
    offs = block_offsets(n)
    grid_u = u + offs[np.newaxis, :] + np.zeros((n, 1))
    grid_v = v + offs[:, np.newaxis] + np.zeros((1, n))
    return Block(bilinear_sample(ycbcr, grid_u, grid_v))


def block_mse(source, target):
    """
    Per-channel mean squared error between two blocks after removing each
    block's channel means, which makes the score blind to brightness
    offsets between photographs.

    Computed as mean((D - mean(D))^2) with D = S - T, which is the same
    quantity as mean(((S - mean S) - (T - mean T))^2).

    Args:
        - source (Block): Reference block S.
        - target (Block): Candidate block T.

    Returns:
        np.ndarray of the (Y, Cb, Cr) errors.
    """
    if source.N != target.N:
        raise DimensionMismatchError(
            "Block sizes differ: {} vs {}.".format(source.N, target.N)
        )
    diff = source.samples - target.samples
    diff = diff - diff.mean(axis=(0, 1))
    return np.mean(diff ** 2, axis=(0, 1))


def match_error(mse):
    """
    Combines the three channel errors into one score, their arithmetic mean.
    """
    mse = np.asarray(mse, dtype=np.float64)
    return float((mse[0] + mse[1] + mse[2]) / 3.0)
