"""
    scancolor.formats.Transform.py
    ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

    Concrete implementation of Format for similarity transform files: the
    scale on one line, the rotation as three rows, then the translation.
    '#' starts a comment, so files can be written by hand.
"""

import io

import numpy as np

from scancolor.formats.Format import Format
from scancolor.geometry import SimilarityTransform
from scancolor.utils import DataParseError, GeometryError

ROW_WIDTHS = (1, 3, 3, 3, 3)


class Transform(Format):
    """
    Inherits attributes and methods from Format along with providing
    implementations of:
        - parse()
        - write()
    """

    name = "Transform"
    extensions = (".txt",)

    def parse(self, data):
        """
        Parses a transform file.

        Args:
            - data (bytes): Raw file contents.

        Returns:
            A SimilarityTransform.
        """
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError:
            raise DataParseError("Transform file is not text.") from None

        rows = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            content = line.split("#", 1)[0].strip()
            if content == "":
                continue
            if len(rows) == len(ROW_WIDTHS):
                raise DataParseError("line {}: unexpected extra row.".format(lineno))
            tokens = content.split()
            expected = ROW_WIDTHS[len(rows)]
            if len(tokens) != expected:
                raise DataParseError(
                    "line {}: expected {} values, got {}.".format(
                        lineno, expected, len(tokens)
                    )
                )
            try:
                rows.append([float(tok) for tok in tokens])
            except ValueError:
                raise DataParseError(
                    "line {}: values must be numbers.".format(lineno)
                ) from None

        if len(rows) != len(ROW_WIDTHS):
            raise DataParseError(
                "Transform file has {} rows, expected {}.".format(
                    len(rows), len(ROW_WIDTHS)
                )
            )
        try:
            return SimilarityTransform(rows[0][0], np.array(rows[1:4]), np.array(rows[4]))
        except GeometryError as ex:
            raise DataParseError("Invalid transform: {}".format(ex)) from None

    def write(self, obj):
        """
        Serializes a transform with full double precision.

        Args:
            - obj (SimilarityTransform): The transform.

        Returns:
            bytes
        """
        fmt = "%.17g"
        out = io.StringIO()
        out.write("# p' = s * R @ p + t\n")
        out.write("# s\n{}\n".format(fmt % obj.scale))
        out.write("# R\n")
        for row in obj.rotation:
            out.write(" ".join(fmt % v for v in row) + "\n")
        out.write("# t\n" + " ".join(fmt % v for v in obj.translation) + "\n")
        return out.getvalue().encode("utf-8")
