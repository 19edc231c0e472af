"""
    scancolor.formats.ImageFile.py
    ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

    Concrete implementation of Format for photographs stored as PNG (8 or 16
    bit) or binary PPM, plus the 16-bit grayscale dumps of depth maps and
    quality masks.

    Loaded images are RGB reals in [0, 1]. 16-bit samples are first reduced
    to 8-bit levels with floor(v / 257 + 0.5), so every image carries 8-bit
    precision whatever its source depth.
"""

import cv2
import numpy as np

from scancolor.formats.Format import Format
from scancolor.imageproc import Image
from scancolor.utils import DataParseError, UnsupportedFormatError, DataSavingError

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
OTHER_MAGIC = (
    (b"\xff\xd8\xff", "JPEG"),
    (b"BM", "BMP"),
    (b"GIF8", "GIF"),
    (b"II*\x00", "TIFF"),
    (b"MM\x00*", "TIFF"),
    (b"P1", "ASCII PBM"),
    (b"P2", "ASCII PGM"),
    (b"P3", "ASCII PPM"),
    (b"P4", "binary PBM"),
    (b"P5", "binary PGM"),
    (b"RIFF", "WEBP"),
)
DUMP_LEVELS = 65534


def sniff_format(data):
    """
    Names the image format of raw bytes from their magic number.

    Args:
        - data (bytes): Raw file contents.

    Returns:
        'PNG', 'PPM', or the name of another recognised format, or 'unknown'.
    """
    if data.startswith(PNG_MAGIC):
        return "PNG"
    if data.startswith(b"P6"):
        return "PPM"
    for magic, name in OTHER_MAGIC:
        if data.startswith(magic):
            return name
    return "unknown"


def reduce_16bit(samples):
    """
    Reduces 16-bit samples to 8-bit levels, rounding half up.
    """
    return np.floor(samples.astype(np.float64) / 257.0 + 0.5)


class ImageFile(Format):
    """
    Inherits attributes and methods from Format along with providing
    implementations of:
        - parse()
        - write()
    """

    name = "Image"
    extensions = (".png", ".ppm")

    def __init__(self, extension=".png"):
        """
        Args:
            - extension (str): Encoding used by write, '.png' or '.ppm'.

        Returns:
            None
        """
        extension = extension.lower()
        if extension not in self.extensions:
            raise UnsupportedFormatError(
                "Cannot write images as '{}', options are {}.".format(
                    extension, self.extensions
                )
            )
        self.extension = extension

    def parse(self, data):
        """
        Decodes a PNG or binary PPM image.

        Args:
            - data (bytes): Raw file contents.

        Returns:
            An Image.
        """
        kind = sniff_format(data)
        if kind not in ("PNG", "PPM"):
            raise UnsupportedFormatError(
                "Unsupported image format '{}', need PNG or binary PPM.".format(kind)
            )
        raw = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_UNCHANGED)
        if raw is None:
            raise DataParseError("Cannot decode {} image.".format(kind))

        if raw.ndim == 2:
            raw = np.repeat(raw[:, :, np.newaxis], 3, axis=2)
        elif raw.shape[2] == 4:
            raw = raw[:, :, :3]
        elif raw.shape[2] != 3:
            raise DataParseError(
                "{} image has {} channels.".format(kind, raw.shape[2])
            )

        if raw.dtype == np.uint16:
            levels = reduce_16bit(raw)
        elif raw.dtype == np.uint8:
            levels = raw.astype(np.float64)
        else:
            raise UnsupportedFormatError(
                "Unsupported {} sample type {}.".format(kind, raw.dtype)
            )
        # OpenCV decodes to BGR
        return Image(levels[:, :, ::-1] / 255.0)

    def write(self, obj):
        """
        Encodes an Image with 8-bit samples.

        Args:
            - obj (Image): The image.

        Returns:
            bytes
        """
        levels = np.rint(obj.pixels * 255.0).astype(np.uint8)
        ok, buffer = cv2.imencode(self.extension, np.ascontiguousarray(levels[:, :, ::-1]))
        if not ok:
            raise DataSavingError("Cannot encode image as {}.".format(self.extension))
        return buffer.tobytes()

    @staticmethod
    def write_dump(values):
        """
        Encodes a real-valued 2D array, e.g. a depth map or a quality mask, as
        a 16-bit grayscale PNG.

        Finite values are mapped linearly onto levels 1..65535 between their
        minimum and maximum; non-finite values become level 0.

        Args:
            - values (np.ndarray): 2D array.

        Returns:
            A tuple (png_bytes, minimum, maximum), the range being None when
            no value is finite.
        """
        values = np.asarray(values, dtype=np.float64)
        finite = np.isfinite(values)
        levels = np.zeros(values.shape, dtype=np.uint16)
        lo = hi = None
        if finite.any():
            lo = float(values[finite].min())
            hi = float(values[finite].max())
            span = hi - lo if hi > lo else 1.0
            scaled = np.rint((values[finite] - lo) / span * DUMP_LEVELS) + 1
            levels[finite] = scaled.astype(np.uint16)
        ok, buffer = cv2.imencode(".png", levels)
        if not ok:
            raise DataSavingError("Cannot encode dump as PNG.")
        return buffer.tobytes(), lo, hi

    @staticmethod
    def dump_sidecar(lo, hi):
        """
        Text describing how to recover real values from a dump's levels.
        """
        return (
            "# value = min + (level - 1) / {levels} * (max - min); level 0 = empty\n"
            "min {lo!r}\nmax {hi!r}\n"
        ).format(levels=DUMP_LEVELS, lo=lo, hi=hi)
