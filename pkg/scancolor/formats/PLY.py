"""
    scancolor.formats.PLY.py
    ~~~~~~~~~~~~~~~~~~~~~~~~

    Concrete implementation of Format for Stanford PLY geometry files, as
    produced by 3D scanners and dense multi-view stereo.

    Decoding and encoding are done by plyfile. Vertex properties x/y/z,
    nx/ny/nz and red/green/blue are read, anything else is skipped; a face
    element with a vertex index list is read into a mesh.
"""

import io
import logging

import numpy as np
from plyfile import PlyData, PlyElement, PlyElementParseError, PlyHeaderParseError

from scancolor.formats.Format import Format
from scancolor.geometry import PointCloud, TriangleMesh
from scancolor.utils import (
    DataParseError,
    TruncationError,
    UnsupportedFormatError,
    GeometryError,
)

ENCODINGS = ("ascii", "binary_little_endian")
FACE_LIST_NAMES = ("vertex_indices", "vertex_index")


class PLY(Format):
    """
    Inherits attributes and methods from Format along with providing
    implementations of:
        - parse()
        - write()

    parse returns a PointCloud, or a TriangleMesh when the file has faces.
    """

    name = "PLY"
    extensions = (".ply",)

    def __init__(self, encoding="binary_little_endian"):
        """
        Args:
            - encoding (str): Encoding used by write, 'ascii' or
                'binary_little_endian'.

        Returns:
            None
        """
        if encoding not in ENCODINGS:
            raise UnsupportedFormatError(
                "PLY encoding '{}' not supported, options are {}.".format(
                    encoding, ENCODINGS
                )
            )
        self.encoding = encoding

    def parse(self, data):
        """
        Parses PLY bytes.

        Args:
            - data (bytes): Raw file contents.

        Returns:
            A PointCloud, or a TriangleMesh if a face element is present.
        """
        ply = self.read_plydata(data)
        names = [element.name for element in ply.elements]
        if "vertex" not in names:
            raise DataParseError("PLY file has no vertex element.")
        cloud = self._build_cloud(ply["vertex"].data)
        if "face" not in names:
            return cloud

        face = ply["face"].data
        list_name = next((n for n in FACE_LIST_NAMES if n in face.dtype.names), None)
        if list_name is None:
            raise DataParseError("PLY face element lacks a vertex index list.")
        faces = self._triangulate(face[list_name])
        try:
            return TriangleMesh(cloud, faces)
        except GeometryError as ex:
            raise DataParseError("Invalid face data: {}".format(ex)) from None

    @staticmethod
    def read_plydata(data):
        """
        Runs plyfile over raw bytes, mapping its errors onto ours.

        Args:
            - data (bytes): Raw file contents.

        Returns:
            A plyfile.PlyData.
        """
        try:
            return PlyData.read(io.BytesIO(data), mmap=False)
        except PlyHeaderParseError as ex:
            raise DataParseError("PLY header: {}".format(ex)) from None
        except PlyElementParseError as ex:
            if "end-of-file" in str(ex):
                raise TruncationError("PLY body ends early: {}".format(ex)) from None
            raise DataParseError("PLY body: {}".format(ex)) from None
        except (ValueError, UnicodeDecodeError) as ex:
            raise DataParseError("Cannot decode PLY: {}".format(ex)) from None

    def _build_cloud(self, vertex):
        fields = vertex.dtype.names
        if not all(axis in fields for axis in "xyz"):
            raise DataParseError("PLY vertex element lacks x/y/z properties.")

        points = np.column_stack([vertex[a].astype(np.float64) for a in "xyz"])
        normals, valid = None, None
        if all(key in fields for key in ("nx", "ny", "nz")):
            normals, valid = self._unit_normals(
                np.column_stack([vertex[a].astype(np.float64) for a in ("nx", "ny", "nz")])
            )
        colors = None
        if all(key in fields for key in ("red", "green", "blue")):
            colors = np.column_stack(
                [vertex[c].astype(np.float64) for c in ("red", "green", "blue")]
            )
            levels = vertex["red"].dtype
            if levels.kind == "u":
                colors = colors / float(2 ** (8 * levels.itemsize) - 1)
            colors = np.clip(colors, 0.0, 1.0)

        try:
            return PointCloud(points.reshape(-1, 3), normals, colors, valid)
        except GeometryError as ex:
            raise DataParseError("Invalid vertex data: {}".format(ex)) from None

    @staticmethod
    def _unit_normals(normals):
        norms = np.linalg.norm(normals, axis=1)
        valid = norms > 0
        out = np.tile([0.0, 0.0, 1.0], (len(normals), 1))
        out[valid] = normals[valid] / norms[valid, np.newaxis]
        if np.all(valid):
            return out, None
        return out, valid

    @staticmethod
    def _triangulate(lists):
        lengths = np.array([len(poly) for poly in lists], dtype=np.int64)
        if len(lengths) == 0:
            return np.zeros((0, 3), dtype=np.int64)
        if np.all(lengths == 3):
            return np.vstack(list(lists)).astype(np.int64)
        short = np.flatnonzero(lengths < 3)
        if len(short) > 0:
            raise DataParseError("Face {} has fewer than 3 vertices.".format(short[0]))

        triangles = []
        for poly in lists:
            for j in range(1, len(poly) - 1):
                triangles.append((poly[0], poly[j], poly[j + 1]))
        logging.warning(
            "Fan-triangulated {} non-triangular faces.".format(int(np.sum(lengths > 3)))
        )
        return np.array(triangles, dtype=np.int64).reshape(-1, 3)

    def write(self, obj):
        """
        Serializes a PointCloud or TriangleMesh.

        Positions and normals are written as doubles, colors as uchar.
        Normals flagged invalid are written as zero vectors.

        Args:
            - obj (PointCloud or TriangleMesh): The geometry.

        Returns:
            bytes
        """
        if isinstance(obj, TriangleMesh):
            cloud, faces = obj.vertices, obj.faces
        else:
            cloud, faces = obj, None

        columns = [("x", "f8"), ("y", "f8"), ("z", "f8")]
        data = [cloud.points[:, 0], cloud.points[:, 1], cloud.points[:, 2]]
        if cloud.normals is not None:
            normals = np.array(cloud.normals)
            if cloud.normal_valid is not None:
                normals[~cloud.normal_valid] = 0.0
            columns += [("nx", "f8"), ("ny", "f8"), ("nz", "f8")]
            data += [normals[:, 0], normals[:, 1], normals[:, 2]]
        if cloud.colors is not None:
            levels = np.rint(cloud.colors * 255.0).astype(np.uint8)
            columns += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
            data += [levels[:, 0], levels[:, 1], levels[:, 2]]

        vertex = np.empty(len(cloud), dtype=columns)
        for (name, _), column in zip(columns, data):
            vertex[name] = column
        elements = [PlyElement.describe(vertex, "vertex")]
        if faces is not None:
            face = np.empty(len(faces), dtype=[("vertex_indices", "i4", (3,))])
            face["vertex_indices"] = faces
            elements.append(PlyElement.describe(face, "face"))

        out = io.BytesIO()
        PlyData(
            elements,
            text=self.encoding == "ascii",
            byte_order="<",
            comments=["scancolor"],
        ).write(out)
        return out.getvalue()
