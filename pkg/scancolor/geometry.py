"""
    geometry.py
    ~~~~~~~~~~~

    Core geometric types shared by every stage: point clouds, triangle
    meshes, similarity transforms and axis-aligned bounding boxes, along with
    k-nearest-neighbour normal estimation.

    All types are immutable after construction. Arrays passed in are copied
    and marked read-only.
"""

from collections import namedtuple
from itertools import product
from dataclasses import dataclass
import logging

import numpy as np
from scipy.spatial import cKDTree

from scancolor.utils import GeometryError

Point3 = namedtuple("Point3", ["x", "y", "z"])

UNIT_NORM_TOL = 1e-6
ROTATION_TOL = 1e-9


def _frozen(array, dtype=np.float64):
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class PointCloud:
    """
    A set of 3D points with optional per-point normals and colors.

    Attributes:
        - points (np.ndarray): (n, 3) float64 positions.
        - normals (np.ndarray, optional): (n, 3) unit normals.
        - colors (np.ndarray, optional): (n, 3) RGB in [0, 1].
        - normal_valid (np.ndarray, optional): (n,) booleans, False where a
            normal couldn't be estimated. Such points are excluded from the
            angle mask.
    """

    points: np.ndarray
    normals: np.ndarray = None
    colors: np.ndarray = None
    normal_valid: np.ndarray = None

    def __post_init__(self):
        points = _frozen(self.points).reshape(-1, 3)
        if not np.all(np.isfinite(points)):
            raise GeometryError("Point positions must be finite.")
        object.__setattr__(self, "points", points)
        n = len(points)

        if self.normals is not None:
            normals = _frozen(self.normals).reshape(-1, 3)
            if len(normals) != n:
                raise GeometryError(
                    "Have {} normals for {} points.".format(len(normals), n)
                )
            norms = np.linalg.norm(normals, axis=1)
            if n > 0 and np.max(np.abs(norms - 1.0)) > UNIT_NORM_TOL:
                raise GeometryError("Normals must have unit length.")
            object.__setattr__(self, "normals", normals)

        if self.colors is not None:
            colors = _frozen(self.colors).reshape(-1, 3)
            if len(colors) != n:
                raise GeometryError(
                    "Have {} colors for {} points.".format(len(colors), n)
                )
            if n > 0 and (np.min(colors) < 0 or np.max(colors) > 1):
                raise GeometryError("Colors must lie in [0, 1].")
            object.__setattr__(self, "colors", colors)

        if self.normal_valid is not None:
            valid = _frozen(self.normal_valid, dtype=bool).reshape(-1)
            if len(valid) != n or self.normals is None:
                raise GeometryError("Normal validity flags need one normal per point.")
            object.__setattr__(self, "normal_valid", valid)

    def __len__(self):
        return len(self.points)

    def with_colors(self, colors):
        """
        Returns a copy of the cloud with its colors replaced.
        """
        return PointCloud(self.points, self.normals, colors, self.normal_valid)

    def with_normals(self, normals, normal_valid=None):
        """
        Returns a copy of the cloud with its normals replaced.
        """
        return PointCloud(self.points, normals, self.colors, normal_valid)

    def subset(self, indices):
        """
        Returns the cloud restricted to the given point indices, in order.
        """
        indices = np.asarray(indices, dtype=np.int64)

        def pick(arr):
            return None if arr is None else arr[indices]

        return PointCloud(
            self.points[indices],
            pick(self.normals),
            pick(self.colors),
            pick(self.normal_valid),
        )


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """
    A triangle mesh whose vertices are a PointCloud.

    Attributes:
        - vertices (PointCloud): The mesh vertices.
        - faces (np.ndarray): (m, 3) int64 vertex indices.
    """

    vertices: PointCloud
    faces: np.ndarray

    def __post_init__(self):
        faces = _frozen(self.faces, dtype=np.int64).reshape(-1, 3)
        n = len(self.vertices)
        if len(faces) > 0:
            if faces.min() < 0 or faces.max() >= n:
                raise GeometryError(
                    "Face indices must be in [0, {}).".format(n)
                )
            degenerate = (
                (faces[:, 0] == faces[:, 1])
                | (faces[:, 1] == faces[:, 2])
                | (faces[:, 0] == faces[:, 2])
            )
            if np.any(degenerate):
                raise GeometryError(
                    "Face {} repeats a vertex index.".format(int(np.argmax(degenerate)))
                )
        object.__setattr__(self, "faces", faces)

    def __len__(self):
        return len(self.vertices)

    @property
    def points(self):
        return self.vertices.points

    def face_normals(self):
        """
        Unit normals of every face following the right-hand rule on the
        vertex order. Zero-area faces get a zero vector.
        """
        tri = self.vertices.points[self.faces]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        norms = np.linalg.norm(cross, axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(norms > 0, cross / norms, 0.0)
        return unit

    def with_vertices(self, vertices):
        return TriangleMesh(vertices, self.faces)


@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    """
    The map p -> s * R @ p + t.

    Attributes:
        - scale (float): Positive uniform scale s.
        - rotation (np.ndarray): 3x3 proper rotation R.
        - translation (np.ndarray): Translation t.
    """

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        scale = float(self.scale)
        if not np.isfinite(scale) or scale <= 0:
            raise GeometryError("Scale must be positive, got {}.".format(scale))
        rotation = _frozen(self.rotation).reshape(3, 3)
        translation = _frozen(self.translation).reshape(3)
        if not (np.all(np.isfinite(rotation)) and np.all(np.isfinite(translation))):
            raise GeometryError("Transform entries must be finite.")
        if np.max(np.abs(rotation.T @ rotation - np.eye(3))) > ROTATION_TOL:
            raise GeometryError("Rotation matrix is not orthonormal.")
        if abs(np.linalg.det(rotation) - 1.0) > ROTATION_TOL:
            raise GeometryError("Rotation matrix must have determinant +1.")
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls):
        return cls(1.0, np.eye(3), np.zeros(3))

    def apply_points(self, points):
        """
        Applies the transform to an (n, 3) array of positions.
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return self.scale * points @ self.rotation.T + self.translation

    def matrix(self):
        """
        The 4x4 homogeneous matrix of the transform.
        """
        out = np.eye(4)
        out[:3, :3] = self.scale * self.rotation
        out[:3, 3] = self.translation
        return out


@dataclass(frozen=True)
class Aabb:
    """
    Axis-aligned bounding box with min <= max componentwise.
    """

    min: Point3
    max: Point3

    def __post_init__(self):
        if any(lo > hi for lo, hi in zip(self.min, self.max)):
            raise GeometryError("Bounding box min must not exceed max.")

    @property
    def diagonal(self):
        return float(np.linalg.norm(np.subtract(self.max, self.min)))

    @property
    def center(self):
        return 0.5 * (np.asarray(self.min) + np.asarray(self.max))

    def corners(self):
        """
        The 8 corners as an (8, 3) array.
        """
        bounds = np.array([self.min, self.max])
        return np.array(
            [
                [bounds[i, 0], bounds[j, 1], bounds[k, 2]]
                for i, j, k in product((0, 1), repeat=3)
            ]
        )


def rotation_about_axis(axis, angle):
    """
    Rotation matrix from an axis and an angle in radians (Rodrigues).

    Args:
        - axis (array-like): Rotation axis, need not be normalised.
        - angle (float): Angle in radians.

    Returns:
        A 3x3 np.ndarray.
    """
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    k = np.array(
        [[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]]
    )
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def rotation_angle(rotation):
    """
    Geodesic angle of a rotation matrix, in radians.
    """
    cos = (np.trace(rotation) - 1.0) / 2.0
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def apply_transform(transform, cloud):
    """
    Applies a similarity transform to a point cloud.

    Positions become s * R @ p + t, normals are rotated by R only and colors
    are carried over unchanged.

    Args:
        - transform (SimilarityTransform): The transform.
        - cloud (PointCloud): Non-empty input cloud.

    Returns:
        A new PointCloud.
    """
    if len(cloud) == 0:
        raise GeometryError("empty geometry")
    points = transform.apply_points(cloud.points)
    normals = None
    if cloud.normals is not None:
        normals = cloud.normals @ transform.rotation.T
        # Re-normalise to stay inside the unit tolerance after many compositions
        normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloud(points, normals, cloud.colors, cloud.normal_valid)


def apply_transform_geometry(transform, geometry):
    """
    Applies a similarity transform to a PointCloud or a TriangleMesh.
    """
    if isinstance(geometry, TriangleMesh):
        return geometry.with_vertices(apply_transform(transform, geometry.vertices))
    return apply_transform(transform, geometry)


def compose(a, b):
    """
    Composes two transforms so that compose(a, b)(p) == a(b(p)).

    Args:
        - a (SimilarityTransform): Applied second.
        - b (SimilarityTransform): Applied first.

    Returns:
        A SimilarityTransform.
    """
    rotation = a.rotation @ b.rotation
    # Project back onto SO(3) to keep round-off from accumulating
    u, _, vt = np.linalg.svd(rotation)
    rotation = u @ vt
    return SimilarityTransform(
        a.scale * b.scale,
        rotation,
        a.scale * a.rotation @ b.translation + a.translation,
    )


def invert(transform):
    """
    Inverse of a similarity transform.

    Args:
        - transform (SimilarityTransform): Transform with s > 0.

    Returns:
        A SimilarityTransform T' with compose(T, T') == identity.
    """
    inv_scale = 1.0 / transform.scale
    rotation_t = transform.rotation.T
    return SimilarityTransform(
        inv_scale, rotation_t, -inv_scale * rotation_t @ transform.translation
    )


def compute_aabb(cloud):
    """
    Computes the exact axis-aligned bounding box of a cloud or mesh.

    Args:
        - cloud (PointCloud or TriangleMesh): Non-empty geometry.

    Returns:
        An Aabb.
    """
    points = cloud.points
    if len(points) == 0:
        raise GeometryError("empty geometry")
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    return Aabb(Point3(*map(float, lo)), Point3(*map(float, hi)))


def estimate_normals(cloud, k=10, viewpoint=None, away=False):
    """
    Estimates per-point normals from the covariance of each point's
    k-nearest-neighbourhood.

    The normal is the eigenvector of the smallest eigenvalue. Neighbourhoods
    whose covariance has rank < 2 (coincident or collinear points) have no
    defined normal; those points get a placeholder normal and are flagged
    invalid.

    Args:
        - cloud (PointCloud): Input cloud with at least 3 points.
        - k (int): Neighbour count, at least 3. The point itself is included
            in its neighbourhood along with up to k others.
        - viewpoint (array-like, optional): If given, each normal is flipped
            to point towards it.
        - away (bool): Flip normals away from the viewpoint instead.

    Returns:
        A PointCloud with normals and normal_valid set.
    """
    if k < 3:
        raise GeometryError("Need k >= 3 neighbours, got {}.".format(k))
    n = len(cloud)
    if n < 3:
        raise GeometryError("Need at least 3 points to estimate normals.")

    k_eff = min(k + 1, n)
    tree = cKDTree(cloud.points)
    _, neighbours = tree.query(cloud.points, k=k_eff)
    patches = cloud.points[neighbours]
    centred = patches - patches.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centred, centred) / k_eff
    eigvals, eigvecs = np.linalg.eigh(cov)

    normals = eigvecs[:, :, 0].copy()
    scale = np.maximum(eigvals[:, 2], np.finfo(float).tiny)
    valid = (eigvals[:, 2] > 0) & (eigvals[:, 1] > 1e-12 * scale)
    normals[~valid] = (0.0, 0.0, 1.0)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)

    if viewpoint is not None:
        to_view = np.asarray(viewpoint, dtype=np.float64) - cloud.points
        facing = np.einsum("ij,ij->i", normals, to_view)
        flip = facing > 0 if away else facing < 0
        normals[flip] *= -1.0

    n_invalid = int(np.sum(~valid))
    if n_invalid > 0:
        logging.warning("{} points have a degenerate neighbourhood.".format(n_invalid))

    return cloud.with_normals(normals, valid)
