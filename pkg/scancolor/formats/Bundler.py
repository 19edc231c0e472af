"""
    scancolor.formats.Bundler.py
    ~~~~~~~~~~~~~~~~~~~~~~~~~~~~

    Concrete implementation of Format for Bundler v0.3 bundle.out files, the
    camera and sparse point output of Structure from Motion.

    Bundler cameras look down -z with y up and measure image positions from
    the image centre with y up. On parsing, each camera is converted to the
    x-right, y-down, z-forward frame used throughout the package by
    R = D R_b, t = D t_b with D = diag(1, -1, -1), and view positions to pixel
    coordinates by u = cx + x_b, v = cy - y_b.
"""

from collections import namedtuple
from dataclasses import dataclass
import io
import logging

import numpy as np

from scancolor.formats.Format import Format
from scancolor.geometry import PointCloud
from scancolor.projection import Camera
from scancolor.utils import (
    DataParseError,
    TruncationError,
    UnsupportedFormatError,
    GeometryError,
)

HEADER = "# Bundle file v0.3"
FLIP = np.diag([1.0, -1.0, -1.0])
# Bundler prints rotations with ~10 significant digits
ORTHONORMAL_SLACK = 1e-6

View = namedtuple("View", ["camera", "key", "u", "v"])


@dataclass(frozen=True, eq=False)
class BundlerReconstruction:
    """
    The cameras and sparse points of an SfM reconstruction.

    Attributes:
        - cameras (tuple): Camera per image, in file order.
        - sparse_points (PointCloud): Points with colors.
        - views (tuple): Per point, a tuple of View(camera, key, u, v) with
            (u, v) in pixel coordinates.
    """

    cameras: tuple
    sparse_points: PointCloud
    views: tuple

    def __post_init__(self):
        object.__setattr__(self, "cameras", tuple(self.cameras))
        object.__setattr__(self, "views", tuple(tuple(v) for v in self.views))
        if len(self.views) != len(self.sparse_points):
            raise GeometryError(
                "Have {} view lists for {} points.".format(
                    len(self.views), len(self.sparse_points)
                )
            )
        n_cams = len(self.cameras)
        for i, views in enumerate(self.views):
            for view in views:
                if not 0 <= view.camera < n_cams:
                    raise GeometryError(
                        "Point {} is seen by camera {} of {}.".format(
                            i, view.camera, n_cams
                        )
                    )


class _Tokens:
    """
    Sequential reader over whitespace-separated tokens that remembers the
    line each one came from.
    """

    def __init__(self, lines, first_line):
        self.tokens = []
        for lineno, line in enumerate(lines, start=first_line):
            if line.lstrip().startswith("#"):
                continue
            self.tokens += [(tok, lineno) for tok in line.split()]
        self.pos = 0

    def _next(self, what):
        if self.pos >= len(self.tokens):
            raise TruncationError("Bundle file ended while reading {}.".format(what))
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def real(self, what):
        token, lineno = self._next(what)
        try:
            return float(token)
        except ValueError:
            raise DataParseError(
                "line {}: expected a number for {}, got '{}'.".format(lineno, what, token)
            ) from None

    def integer(self, what):
        token, lineno = self._next(what)
        try:
            return int(token)
        except ValueError:
            raise DataParseError(
                "line {}: expected an integer for {}, got '{}'.".format(
                    lineno, what, token
                )
            ) from None

    def reals(self, n, what):
        return np.array([self.real(what) for _ in range(n)])

    @property
    def exhausted(self):
        return self.pos >= len(self.tokens)

    @property
    def lineno(self):
        return self.tokens[min(self.pos, len(self.tokens) - 1)][1]


def _clean_rotation(rotation, index):
    """
    Bundler rotations are printed with limited precision, so nearly
    orthonormal matrices are snapped onto SO(3).
    """
    error = np.max(np.abs(rotation.T @ rotation - np.eye(3)))
    if error > ORTHONORMAL_SLACK or np.linalg.det(rotation) < 0:
        raise DataParseError("Camera {} has an invalid rotation matrix.".format(index))
    if error > 1e-12:
        u, _, vt = np.linalg.svd(rotation)
        rotation = u @ vt
    return rotation


class Bundler(Format):
    """
    Inherits attributes and methods from Format along with providing
    implementations of:
        - parse()
        - write()

    Bundler files don't record image sizes, so they must be supplied to
    parse for the principal point and pixel conversion.
    """

    name = "Bundler"
    extensions = (".out",)

    def __init__(self, image_dimensions=None):
        """
        Args:
            - image_dimensions (list, optional): (width, height) per camera,
                in file order. Required by parse.

        Returns:
            None
        """
        self.image_dimensions = (
            None if image_dimensions is None else [tuple(d) for d in image_dimensions]
        )

    def parse(self, data):
        """
        Parses a bundle.out file.

        Args:
            - data (bytes): Raw file contents.

        Returns:
            A BundlerReconstruction.
        """
        try:
            lines = data.decode("ascii").splitlines()
        except UnicodeDecodeError:
            raise DataParseError("Bundle file is not ASCII text.") from None

        if len(lines) == 0 or not lines[0].startswith("# Bundle file"):
            raise UnsupportedFormatError("Bundle file has no version header.")
        if lines[0].strip() != HEADER:
            raise UnsupportedFormatError(
                "Unsupported bundle version '{}', need '{}'.".format(
                    lines[0].strip(), HEADER
                )
            )

        tokens = _Tokens(lines[1:], 2)
        n_cams = tokens.integer("camera count")
        n_points = tokens.integer("point count")
        if n_cams < 1 or n_points < 0:
            raise DataParseError(
                "Bundle header declares {} cameras and {} points.".format(n_cams, n_points)
            )
        if self.image_dimensions is None or len(self.image_dimensions) < n_cams:
            raise DataParseError(
                "Bundle file declares {} cameras but {} image sizes were given.".format(
                    n_cams, 0 if self.image_dimensions is None else len(self.image_dimensions)
                )
            )

        cameras = [self._parse_camera(tokens, i) for i in range(n_cams)]
        n_unusable = sum(not cam.usable for cam in cameras)
        if n_unusable > 0:
            logging.warning("{} cameras have zero focal length.".format(n_unusable))

        positions = np.zeros((n_points, 3))
        colors = np.zeros((n_points, 3))
        views = []
        for i in range(n_points):
            positions[i] = tokens.reals(3, "point {} position".format(i))
            colors[i] = tokens.reals(3, "point {} color".format(i))
            n_views = tokens.integer("point {} view count".format(i))
            point_views = []
            for _ in range(n_views):
                lineno = tokens.lineno
                cam_idx = tokens.integer("view camera")
                key = tokens.integer("view key")
                x_b = tokens.real("view x")
                y_b = tokens.real("view y")
                if not 0 <= cam_idx < n_cams:
                    raise DataParseError(
                        "line {}: view references camera {} of {}.".format(
                            lineno, cam_idx, n_cams
                        )
                    )
                cam = cameras[cam_idx]
                point_views.append(View(cam_idx, key, cam.cx + x_b, cam.cy - y_b))
            views.append(tuple(point_views))

        if not tokens.exhausted:
            raise DataParseError(
                "line {}: unexpected content after {} points.".format(
                    tokens.lineno, n_points
                )
            )

        if np.any(colors < 0) or np.any(colors > 255):
            raise DataParseError("Point colors must lie in [0, 255].")
        try:
            cloud = PointCloud(positions, colors=colors / 255.0)
        except GeometryError as ex:
            raise DataParseError("Invalid sparse points: {}".format(ex)) from None
        return BundlerReconstruction(cameras, cloud, views)

    def _parse_camera(self, tokens, index):
        what = "camera {}".format(index)
        focal, k1, k2 = tokens.reals(3, what)
        rotation_b = tokens.reals(9, what).reshape(3, 3)
        translation_b = tokens.reals(3, what)
        width, height = self.image_dimensions[index]

        if focal == 0:
            return Camera(
                0.0, k1, k2, np.eye(3), np.zeros(3), width, height, usable=False
            )
        if focal < 0 or not np.all(np.isfinite(rotation_b)):
            raise DataParseError("Camera {} is invalid.".format(index))
        rotation_b = _clean_rotation(rotation_b, index)
        return Camera(
            focal, k1, k2, FLIP @ rotation_b, FLIP @ translation_b, width, height
        )

    def write(self, obj):
        """
        Serializes a reconstruction back into Bundler's conventions.

        Cameras flagged unusable are written as all zeros. The principal
        point isn't stored, so view positions are written relative to each
        camera's own principal point.

        Args:
            - obj (BundlerReconstruction): The reconstruction.

        Returns:
            bytes
        """
        out = io.StringIO()
        out.write(HEADER + "\n")
        out.write("{} {}\n".format(len(obj.cameras), len(obj.sparse_points)))
        fmt = "%.17g"
        for cam in obj.cameras:
            if not cam.usable:
                out.write("0 0 0\n" + "0 0 0\n" * 4)
                continue
            rotation_b = FLIP @ cam.rotation
            translation_b = FLIP @ cam.translation
            out.write(" ".join(fmt % v for v in (cam.focal, cam.k1, cam.k2)) + "\n")
            for row in rotation_b:
                out.write(" ".join(fmt % v for v in row) + "\n")
            out.write(" ".join(fmt % v for v in translation_b) + "\n")

        colors = np.zeros((len(obj.sparse_points), 3), dtype=np.int64)
        if obj.sparse_points.colors is not None:
            colors = np.rint(obj.sparse_points.colors * 255.0).astype(np.int64)
        for point, color, views in zip(obj.sparse_points.points, colors, obj.views):
            out.write(" ".join(fmt % v for v in point) + "\n")
            out.write(" ".join(str(c) for c in color) + "\n")
            entries = [str(len(views))]
            for view in views:
                cam = obj.cameras[view.camera]
                entries.append(
                    "{} {} {} {}".format(
                        view.camera,
                        view.key,
                        fmt % (view.u - cam.cx),
                        fmt % (cam.cy - view.v),
                    )
                )
            out.write(" ".join(entries) + "\n")
        return out.getvalue().encode("ascii")
