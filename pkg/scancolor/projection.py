"""
    projection.py
    ~~~~~~~~~~~~~

    Pinhole cameras with two-coefficient radial distortion, depth-buffer
    rendering of meshes and point clouds, visibility tests, and the three
    per-pixel quality masks (angle, depth, border) plus their product.

    Camera frame: x right, y down, z forward. Pixel centres sit at integer
    coordinates with the origin at the top-left pixel.
"""

from dataclasses import dataclass, replace
import io
import logging
import os

import numpy as np
from scipy import ndimage

from scancolor.geometry import (
    TriangleMesh,
    ROTATION_TOL,
    compute_aabb,
    estimate_normals,
)
import scancolor.utils as utils
from scancolor.utils import GeometryError, DimensionMismatchError

DEFAULT_SPLAT_RADIUS = 2
DEFAULT_BORDER_WIDTH = 20
DEFAULT_DEPTH_JUMP = 0.01
VISIBILITY_FRACTION = 0.005
# Depth spreads below this fraction of the depth are round-off
DEPTH_NOISE = 1e-9
# Barycentric slack so pixels on shared edges aren't dropped by round-off
EDGE_TOL = 1e-9
# Candidate pixels scored per batch when rasterizing triangles
FRAGMENT_BUDGET = 1 << 20


@dataclass(frozen=True, eq=False)
class Camera:
    """
    A calibrated pinhole camera.

    Attributes:
        - focal (float): Focal length in pixels.
        - k1, k2 (float): Radial distortion coefficients.
        - rotation (np.ndarray): 3x3 world-to-camera rotation.
        - translation (np.ndarray): World-to-camera translation.
        - width, height (int): Image size in pixels.
        - cx, cy (float, optional): Principal point, defaults to the image
            centre ((w - 1) / 2, (h - 1) / 2).
        - usable (bool): False for cameras the SfM stage couldn't register.
            They keep their index but are never projected into.
    """

    focal: float
    k1: float
    k2: float
    rotation: np.ndarray
    translation: np.ndarray
    width: int
    height: int
    cx: float = None
    cy: float = None
    usable: bool = True

    def __post_init__(self):
        rotation = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        translation = np.array(self.translation, dtype=np.float64).reshape(3)
        if self.usable:
            if not np.isfinite(self.focal) or self.focal <= 0:
                raise GeometryError(
                    "Focal length must be positive, got {}.".format(self.focal)
                )
            if np.max(np.abs(rotation.T @ rotation - np.eye(3))) > ROTATION_TOL:
                raise GeometryError("Camera rotation is not orthonormal.")
            if abs(np.linalg.det(rotation) - 1.0) > ROTATION_TOL:
                raise GeometryError("Camera rotation must have determinant +1.")
        if self.width < 1 or self.height < 1:
            raise GeometryError(
                "Invalid image size {}x{}.".format(self.width, self.height)
            )
        rotation.setflags(write=False)
        translation.setflags(write=False)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)
        object.__setattr__(self, "focal", float(self.focal))
        object.__setattr__(self, "k1", float(self.k1))
        object.__setattr__(self, "k2", float(self.k2))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        if self.cx is None:
            object.__setattr__(self, "cx", (self.width - 1) / 2.0)
        if self.cy is None:
            object.__setattr__(self, "cy", (self.height - 1) / 2.0)
        object.__setattr__(self, "cx", float(self.cx))
        object.__setattr__(self, "cy", float(self.cy))

    @property
    def center(self):
        """
        Camera centre in world coordinates, -R^T t.
        """
        return -self.rotation.T @ self.translation

    @property
    def shape(self):
        return (self.height, self.width)


@dataclass(frozen=True, eq=False)
class DepthMap:
    """
    Per-pixel camera-space depth, +inf where nothing was rendered.
    """

    depth: np.ndarray

    def __post_init__(self):
        depth = np.array(self.depth, dtype=np.float64)
        if depth.ndim != 2:
            raise DimensionMismatchError("Depth map must be 2D.")
        finite = np.isfinite(depth)
        if np.any(depth[finite] <= 0) or np.any(np.isnan(depth)):
            raise GeometryError("Finite depths must be positive.")
        depth.setflags(write=False)
        object.__setattr__(self, "depth", depth)

    @property
    def width(self):
        return self.depth.shape[1]

    @property
    def height(self):
        return self.depth.shape[0]


@dataclass(frozen=True, eq=False)
class QualityMask:
    """
    Per-pixel weight in [0, 1], zero outside the object's footprint.
    """

    weight: np.ndarray

    def __post_init__(self):
        weight = np.array(self.weight, dtype=np.float64)
        if weight.ndim != 2:
            raise DimensionMismatchError("Quality mask must be 2D.")
        if weight.size > 0 and (weight.min() < 0 or weight.max() > 1):
            raise ValueError("Mask weights must lie in [0, 1].")
        weight.setflags(write=False)
        object.__setattr__(self, "weight", weight)

    @property
    def width(self):
        return self.weight.shape[1]

    @property
    def height(self):
        return self.weight.shape[0]


@dataclass(frozen=True, eq=False)
class Raster:
    """
    Output of rasterize.

    Attributes:
        - depth (DepthMap): z-min depth buffer.
        - index (np.ndarray): (h, w) face index for meshes or point index for
            clouds that won each pixel, -1 where empty.
        - bary (np.ndarray): (h, w, 3) perspective-correct barycentric
            weights for meshes, None for clouds.
    """

    depth: DepthMap
    index: np.ndarray
    bary: np.ndarray = None

    @property
    def covered(self):
        return self.index >= 0

    def surface_points(self, geometry):
        """
        World position of the surface seen at each covered pixel, NaN
        elsewhere.
        """
        out = np.full(self.index.shape + (3,), np.nan)
        covered = self.covered
        idx = self.index[covered]
        if self.bary is None:
            out[covered] = geometry.points[idx]
        else:
            tri = geometry.points[geometry.faces[idx]]
            out[covered] = np.einsum("pk,pkj->pj", self.bary[covered], tri)
        return out


@dataclass(frozen=True, eq=False)
class MaskSet:
    """
    The depth map and all quality masks of one image.
    """

    depth: DepthMap
    angle: QualityMask
    depth_weight: QualityMask
    border: QualityMask
    combined: QualityMask


def project_points(cam, points):
    """
    Projects world points into a camera.

    Args:
        - cam (Camera): The camera.
        - points (np.ndarray): (n, 3) world positions.

    Returns:
        A tuple (uv, depth, in_front): (n, 2) pixel positions, (n,) camera
        space depths and (n,) booleans. Pixel positions of points behind the
        camera are NaN.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    q = points @ cam.rotation.T + cam.translation
    depth = q[:, 2]
    in_front = depth > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(in_front, q[:, 0] / depth, np.nan)
        y = np.where(in_front, q[:, 1] / depth, np.nan)
    r2 = x * x + y * y
    rho = 1.0 + cam.k1 * r2 + cam.k2 * r2 * r2
    uv = np.stack([cam.cx + cam.focal * rho * x, cam.cy + cam.focal * rho * y], axis=1)
    return uv, depth, in_front


def project_point(cam, p):
    """
    Projects a single world point.

    Args:
        - cam (Camera): The camera.
        - p (array-like): A finite 3D point.

    Returns:
        A (u, v, depth) tuple, or None if the point isn't in front of the
        camera.
    """
    uv, depth, in_front = project_points(cam, np.asarray(p, dtype=np.float64))
    if not in_front[0]:
        return None
    return float(uv[0, 0]), float(uv[0, 1]), float(depth[0])


def transform_camera(cam, transform):
    """
    Re-expresses a camera in the frame reached by a similarity transform, so
    that projecting T(p) with the new camera equals projecting p with the
    old one. Depths scale by s.

    Args:
        - cam (Camera): Camera in the source frame.
        - transform (SimilarityTransform): Source-to-destination transform.

    Returns:
        A Camera.
    """
    if not cam.usable:
        return cam
    rot = cam.rotation @ transform.rotation.T
    # Project back onto SO(3) so round-off doesn't trip Camera validation
    u, _, vt = np.linalg.svd(rot)
    rot = u @ vt
    trans = transform.scale * cam.translation - rot @ transform.translation
    return replace(cam, rotation=rot, translation=trans)


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _rasterize_mesh(mesh, cam):
    height, width = cam.shape
    depth = np.full((height, width), np.inf)
    index = np.full((height, width), -1, dtype=np.int64)
    bary = np.zeros((height, width, 3))

    uv, z, front = project_points(cam, mesh.points)
    faces = mesh.faces
    ok = np.all(front[faces], axis=1)
    fu = uv[faces, 0]
    fv = uv[faces, 1]
    area = _edge(fu[:, 0], fv[:, 0], fu[:, 1], fv[:, 1], fu[:, 2], fv[:, 2])
    x0 = np.maximum(np.ceil(np.min(fu, axis=1)), 0)
    x1 = np.minimum(np.floor(np.max(fu, axis=1)), width - 1)
    y0 = np.maximum(np.ceil(np.min(fv, axis=1)), 0)
    y1 = np.minimum(np.floor(np.max(fv, axis=1)), height - 1)
    ok &= (x0 <= x1) & (y0 <= y1) & (area != 0)

    ids = np.flatnonzero(ok)
    widths = (x1[ids] - x0[ids] + 1).astype(np.int64)
    counts = widths * (y1[ids] - y0[ids] + 1).astype(np.int64)
    ends = np.cumsum(counts)

    # Triangles go through in index order, a bounded number of candidate
    # pixels at a time; earlier triangles keep pixels on equal depth
    start = 0
    while start < len(ids):
        done = ends[start - 1] if start > 0 else 0
        stop = max(int(np.searchsorted(ends, done + FRAGMENT_BUDGET, side="right")), start + 1)
        chunk = slice(start, stop)
        face = np.repeat(ids[chunk], counts[chunk])
        local = np.arange(len(face)) - np.repeat(ends[chunk] - counts[chunk] - done, counts[chunk])
        step = np.repeat(widths[chunk], counts[chunk])
        px = np.repeat(x0[ids[chunk]], counts[chunk]) + local % step
        py = np.repeat(y0[ids[chunk]], counts[chunk]) + local // step
        start = stop

        (au, bu, cu), (av, bv, cv) = fu[face].T, fv[face].T
        l0 = _edge(bu, bv, cu, cv, px, py) / area[face]
        l1 = _edge(cu, cv, au, av, px, py) / area[face]
        l2 = 1.0 - l0 - l1
        inside = (l0 >= -EDGE_TOL) & (l1 >= -EDGE_TOL) & (l2 >= -EDGE_TOL)
        face, px, py = face[inside], px[inside], py[inside]
        l0, l1, l2 = l0[inside], l1[inside], l2[inside]
        if len(face) == 0:
            continue
        za, zb, zc = z[faces[face]].T
        pz = 1.0 / (l0 / za + l1 / zb + l2 / zc)

        # Nearest fragment per pixel, ties to the lower triangle index
        pixel = py.astype(np.int64) * width + px.astype(np.int64)
        order = np.lexsort((face, pz, pixel))
        win = order[np.unique(pixel[order], return_index=True)[1]]
        win = win[pz[win] < depth.flat[pixel[win]]]
        pixel = pixel[win]
        depth.flat[pixel] = pz[win]
        index.flat[pixel] = face[win]
        weights = np.stack([l0[win] / za[win], l1[win] / zb[win], l2[win] / zc[win]], axis=1)
        bary.reshape(-1, 3)[pixel] = weights * pz[win, np.newaxis]

    return Raster(DepthMap(depth), index, bary)


def _rasterize_cloud(cloud, cam, splat_radius):
    height, width = cam.shape
    depth = np.full((height, width), np.inf)
    index = np.full((height, width), -1, dtype=np.int64)

    uv, z, front = project_points(cam, cloud.points)
    ids = np.flatnonzero(front)
    centre_u = np.rint(uv[ids, 0]).astype(np.int64)
    centre_v = np.rint(uv[ids, 1]).astype(np.int64)
    offs = np.arange(-splat_radius, splat_radius + 1)
    du, dv = np.meshgrid(offs, offs)
    cols = (centre_u[:, np.newaxis] + du.ravel()).ravel()
    rows = (centre_v[:, np.newaxis] + dv.ravel()).ravel()
    pid = np.repeat(ids, du.size)
    inside = (cols >= 0) & (cols < width) & (rows >= 0) & (rows < height)
    cols, rows, pid = cols[inside], rows[inside], pid[inside]
    if len(pid) == 0:
        return Raster(DepthMap(depth), index)

    # Sort by pixel, then depth, then point index; the first entry of each
    # pixel wins
    pixel = rows * width + cols
    order = np.lexsort((pid, z[pid], pixel))
    pixel, pid = pixel[order], pid[order]
    first = np.unique(pixel, return_index=True)[1]
    winners, pixels = pid[first], pixel[first]
    depth.flat[pixels] = z[winners]
    index.flat[pixels] = winners
    return Raster(DepthMap(depth), index)


def rasterize(geometry, cam, splat_radius=DEFAULT_SPLAT_RADIUS):
    """
    Renders geometry into a camera's depth buffer.

    Meshes are rasterized in batches of triangles at pixel centres with
    perspective-correct depth and z-min compositing. Bare point clouds are
    splatted as (2r + 1)^2 pixel squares, the nearest point winning each
    pixel (ties by lower index).

    Args:
        - geometry (TriangleMesh or PointCloud): Non-empty geometry.
        - cam (Camera): The camera.
        - splat_radius (int): Splat radius in pixels for clouds.

    Returns:
        A Raster.
    """
    if len(geometry.points) == 0:
        raise GeometryError("empty geometry")
    if isinstance(geometry, TriangleMesh) and len(geometry.faces) > 0:
        return _rasterize_mesh(geometry, cam)
    return _rasterize_cloud(
        geometry.vertices if isinstance(geometry, TriangleMesh) else geometry,
        cam,
        splat_radius,
    )


def render_depth_map(geometry, cam, splat_radius=DEFAULT_SPLAT_RADIUS):
    """
    Renders the depth map of geometry seen from a camera.

    Args:
        - geometry (TriangleMesh or PointCloud): Non-empty geometry.
        - cam (Camera): The camera.
        - splat_radius (int): Splat radius in pixels for clouds.

    Returns:
        A DepthMap.
    """
    return rasterize(geometry, cam, splat_radius).depth


def default_visibility_epsilon(geometry):
    """
    0.5% of the geometry's bounding box diagonal.
    """
    return VISIBILITY_FRACTION * compute_aabb(geometry).diagonal


def visibility(points, cam, dm, eps):
    """
    Vectorised visibility test.

    Args:
        - points (np.ndarray): (n, 3) world positions.
        - cam (Camera): The camera dm was rendered for.
        - dm (DepthMap): Depth map.
        - eps (float): Depth slack in world units.

    Returns:
        A tuple (visible, uv, cols, rows): booleans, projections and the
        nearest pixel of each projection (clipped into the image).
    """
    uv, depth, in_front = project_points(cam, points)
    uv_safe = np.nan_to_num(uv, nan=-1.0)
    cols = np.rint(uv_safe[:, 0]).astype(np.int64)
    rows = np.rint(uv_safe[:, 1]).astype(np.int64)
    in_bounds = (
        in_front & (cols >= 0) & (cols < cam.width) & (rows >= 0) & (rows < cam.height)
    )
    cols = np.clip(cols, 0, cam.width - 1)
    rows = np.clip(rows, 0, cam.height - 1)
    visible = in_bounds & (depth <= dm.depth[rows, cols] + eps)
    return visible, uv, cols, rows


def is_visible(p, cam, dm, eps):
    """
    Whether a point is seen by a camera: its projection is inside the image,
    it lies in front of the camera and its depth is at most the depth map
    value at the nearest pixel plus eps.

    Args:
        - p (array-like): World position.
        - cam (Camera): The camera dm was rendered for.
        - dm (DepthMap): Depth map.
        - eps (float): Depth slack in world units.

    Returns:
        bool
    """
    visible, _, _, _ = visibility(np.asarray(p, dtype=np.float64), cam, dm, eps)
    return bool(visible[0])


def angle_mask(geometry, cam, raster=None, normal_neighbors=10):
    """
    Weight by incidence angle: |n . v| where v is the unit direction from the
    surface point to the camera centre. Normals are oriented towards the
    camera, so the sign of the stored normal doesn't matter.

    Meshes use face normals. Clouds use their own normals, estimated from
    normal_neighbors neighbours when absent; invalid normals get weight 0.

    Args:
        - geometry (TriangleMesh or PointCloud): Geometry.
        - cam (Camera): The camera.
        - raster (Raster, optional): Precomputed raster of geometry in cam.
        - normal_neighbors (int): k for normal estimation.

    Returns:
        A QualityMask.
    """
    if raster is None:
        raster = rasterize(geometry, cam)
    covered = raster.covered
    idx = raster.index[covered]
    weight = np.zeros(raster.index.shape)

    if raster.bary is not None:
        normals = geometry.face_normals()[idx]
        valid = np.linalg.norm(normals, axis=1) > 0
    else:
        cloud = geometry.vertices if isinstance(geometry, TriangleMesh) else geometry
        if cloud.normals is None:
            cloud = estimate_normals(cloud, normal_neighbors)
        normals = cloud.normals[idx]
        valid = (
            np.ones(len(idx), dtype=bool)
            if cloud.normal_valid is None
            else cloud.normal_valid[idx]
        )

    surface = raster.surface_points(geometry)[covered]
    view = cam.center - surface
    view /= np.linalg.norm(view, axis=1, keepdims=True)
    cosine = np.abs(np.einsum("ij,ij->i", normals, view))
    weight[covered] = np.where(valid, np.clip(cosine, 0.0, 1.0), 0.0)
    return QualityMask(weight)


def depth_mask(dm):
    """
    Linear depth ramp: 1 at the nearest covered pixel, 0 at the farthest.
    A map of constant depth gets weight 1 across its footprint.

    Args:
        - dm (DepthMap): Depth map with at least one finite pixel.

    Returns:
        A QualityMask.
    """
    finite = np.isfinite(dm.depth)
    weight = np.zeros(dm.depth.shape)
    if not finite.any():
        raise GeometryError("Depth map has no covered pixels.")
    values = dm.depth[finite]
    d_min, d_max = values.min(), values.max()
    if d_max - d_min <= DEPTH_NOISE * d_max:
        weight[finite] = 1.0
    else:
        weight[finite] = (d_max - values) / (d_max - d_min)
    return QualityMask(weight)


def border_pixels(dm, depth_jump=DEFAULT_DEPTH_JUMP):
    """
    Finds border pixels: covered pixels with an uncovered 4-neighbour (the
    image edge counts as uncovered) and covered pixels across a depth jump
    larger than depth_jump times the depth range.

    Args:
        - dm (DepthMap): Depth map.
        - depth_jump (float): Jump threshold as a fraction of the depth range.

    Returns:
        A boolean (h, w) array.
    """
    depth = dm.depth
    finite = np.isfinite(depth)
    padded = np.pad(depth, 1, constant_values=np.inf)
    centre = padded[1:-1, 1:-1]
    neighbours = [
        padded[:-2, 1:-1],
        padded[2:, 1:-1],
        padded[1:-1, :-2],
        padded[1:-1, 2:],
    ]
    border = np.zeros(depth.shape, dtype=bool)
    for nb in neighbours:
        border |= ~np.isfinite(nb)

    if finite.any():
        d_min, d_max = depth[finite].min(), depth[finite].max()
        tau = depth_jump * (d_max - d_min)
        if d_max - d_min > DEPTH_NOISE * d_max:
            with np.errstate(invalid="ignore"):
                for nb in neighbours:
                    border |= np.isfinite(nb) & (np.abs(centre - nb) > tau)

    return border & finite


def border_mask(dm, cam=None, width=DEFAULT_BORDER_WIDTH, depth_jump=DEFAULT_DEPTH_JUMP):
    """
    Weight by distance from borders: min(1, d / width) where d is the
    taxicab chamfer distance to the nearest border pixel.

    Args:
        - dm (DepthMap): Depth map.
        - cam (Camera, optional): The camera dm was rendered for, used only
            to check dimensions.
        - width (int): Distance in pixels at which the weight reaches 1.
        - depth_jump (float): Jump threshold as a fraction of the depth range.

    Returns:
        A QualityMask.
    """
    if cam is not None and cam.shape != dm.depth.shape:
        raise DimensionMismatchError(
            "Depth map is {} but camera is {}.".format(dm.depth.shape, cam.shape)
        )
    finite = np.isfinite(dm.depth)
    border = border_pixels(dm, depth_jump)
    weight = np.zeros(dm.depth.shape)
    if not finite.any():
        return QualityMask(weight)

    interior = finite & ~border
    distance = ndimage.distance_transform_cdt(interior, metric="taxicab")
    weight[finite] = np.minimum(1.0, distance[finite] / float(width))
    return QualityMask(weight)


def combined_mask(angle, depth, border):
    """
    Per-pixel product of the three quality masks.

    Args:
        - angle, depth, border (QualityMask): Masks of equal size.

    Returns:
        A QualityMask.
    """
    shapes = {angle.weight.shape, depth.weight.shape, border.weight.shape}
    if len(shapes) != 1:
        raise DimensionMismatchError(
            "Mask sizes differ: {}.".format(sorted(shapes))
        )
    return QualityMask(angle.weight * depth.weight * border.weight)


def _mask_cache_key(geometry, cam, params):
    parts = [geometry.points]
    if isinstance(geometry, TriangleMesh):
        parts.append(geometry.faces)
    elif geometry.normals is not None:
        parts.append(geometry.normals)
    parts += [
        cam.rotation,
        cam.translation,
        np.array([cam.focal, cam.k1, cam.k2, cam.cx, cam.cy]),
        cam.shape,
        params,
    ]
    return utils.content_hash(*parts)


def _load_cached(filename):
    try:
        with np.load(filename) as data:
            return MaskSet(
                DepthMap(data["depth"]),
                QualityMask(data["angle"]),
                QualityMask(data["depth_weight"]),
                QualityMask(data["border"]),
                QualityMask(data["combined"]),
            )
    except (OSError, KeyError, ValueError) as ex:
        logging.warning("Ignoring unreadable mask cache {}: {}".format(filename, ex))
        return None


def _save_cached(masks, filename):
    buffer = io.BytesIO()
    np.savez(
        buffer,
        depth=masks.depth.depth,
        angle=masks.angle.weight,
        depth_weight=masks.depth_weight.weight,
        border=masks.border.weight,
        combined=masks.combined.weight,
    )
    utils.atomic_write(buffer.getvalue(), filename)


def quality_masks(
    geometry,
    cam,
    splat_radius=DEFAULT_SPLAT_RADIUS,
    border_width=DEFAULT_BORDER_WIDTH,
    depth_jump=DEFAULT_DEPTH_JUMP,
    normal_neighbors=10,
    cache_dir=None,
):
    """
    Renders the depth map and every quality mask of one camera.

    When cache_dir is given, results are stored there under a hash of the
    geometry, camera and parameters, and reused on later runs.

    Args:
        - geometry (TriangleMesh or PointCloud): Scan geometry.
        - cam (Camera): Camera in the scan frame.
        - splat_radius (int): Splat radius for clouds.
        - border_width (int): Border mask ramp width in pixels.
        - depth_jump (float): Border depth jump fraction.
        - normal_neighbors (int): k for normal estimation of clouds.
        - cache_dir (str, optional): Mask cache folder.

    Returns:
        A MaskSet.
    """
    params = (splat_radius, border_width, depth_jump, normal_neighbors)
    cache_fn = None
    if cache_dir is not None:
        key = _mask_cache_key(geometry, cam, params)
        cache_fn = os.path.join(cache_dir, "{}.npz".format(key))
        if os.path.isfile(cache_fn):
            cached = _load_cached(cache_fn)
            if cached is not None:
                logging.debug("Loaded masks from cache {}".format(cache_fn))
                return cached

    raster = rasterize(geometry, cam, splat_radius)
    if not raster.covered.any():
        empty = QualityMask(np.zeros(cam.shape))
        masks = MaskSet(raster.depth, empty, empty, empty, empty)
    else:
        angle = angle_mask(geometry, cam, raster, normal_neighbors)
        depth_weight = depth_mask(raster.depth)
        border = border_mask(raster.depth, cam, border_width, depth_jump)
        masks = MaskSet(
            raster.depth,
            angle,
            depth_weight,
            border,
            combined_mask(angle, depth_weight, border),
        )

    if cache_fn is not None:
        _save_cached(masks, cache_fn)
    return masks
