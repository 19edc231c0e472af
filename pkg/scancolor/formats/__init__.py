"""
    scancolor.formats
    ~~~~~~~~~~~~~~~~~

    One Format sub-class per on-disk file type, plus function shortcuts for
    the common conversions.
"""

from scancolor.formats.PLY import PLY
from scancolor.formats.Bundler import Bundler, BundlerReconstruction, View
from scancolor.formats.Correspondences import Correspondences
from scancolor.formats.Transform import Transform
from scancolor.formats.ImageFile import ImageFile


def parse_ply(data):
    return PLY().parse(data)


def write_ply(geometry, encoding="binary_little_endian"):
    return PLY(encoding).write(geometry)


def parse_bundler(data, image_dimensions):
    return Bundler(image_dimensions).parse(data)


def write_bundler(reconstruction):
    return Bundler().write(reconstruction)


def parse_correspondences(data):
    return Correspondences().parse(data)


def write_correspondences(pairs):
    return Correspondences().write(pairs)


def parse_transform(data):
    return Transform().parse(data)


def write_transform(transform):
    return Transform().write(transform)


def load_image(path):
    return ImageFile().read_file(path)


def save_image(image, path, overwrite=False):
    extension = "." + path.rsplit(".", 1)[-1] if "." in path else ".png"
    ImageFile(extension).save_file(image, path, overwrite)
