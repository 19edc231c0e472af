"""
    scancolor.formats.Correspondences.py
    ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

    Concrete implementation of Format for hand-picked point correspondences:
    one "sx sy sz tx ty tz" row per pair, source point in the SfM frame and
    target point in the scan frame. '#' starts a comment.
"""

import io

from scancolor.formats.Format import Format
from scancolor.geometry import Point3
from scancolor.utils import DataParseError


class Correspondences(Format):
    """
    Inherits attributes and methods from Format along with providing
    implementations of:
        - parse()
        - write()
    """

    name = "Correspondences"
    extensions = (".txt", ".corr")

    def parse(self, data):
        """
        Parses a correspondence file.

        The minimum pair count is enforced by the alignment that consumes the
        pairs, not here.

        Args:
            - data (bytes): Raw file contents.

        Returns:
            A list of (Point3, Point3) tuples in file order.
        """
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError:
            raise DataParseError("Correspondence file is not text.") from None

        pairs = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            content = line.split("#", 1)[0].strip()
            if content == "":
                continue
            tokens = content.split()
            if len(tokens) != 6:
                raise DataParseError(
                    "row {}: expected 6 values, got {}.".format(lineno, len(tokens))
                )
            try:
                values = [float(tok) for tok in tokens]
            except ValueError:
                raise DataParseError(
                    "row {}: values must be numbers.".format(lineno)
                ) from None
            pairs.append((Point3(*values[:3]), Point3(*values[3:])))
        return pairs

    def write(self, obj):
        """
        Serializes pairs with full double precision.

        Args:
            - obj (list): (source, target) tuples of 3-vectors.

        Returns:
            bytes
        """
        out = io.StringIO()
        out.write("# sx sy sz tx ty tz\n")
        for source, target in obj:
            out.write(" ".join("%.17g" % float(v) for v in (*source, *target)) + "\n")
        return out.getvalue().encode("utf-8")
