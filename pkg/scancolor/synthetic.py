"""
    synthetic.py
    ~~~~~~~~~~~~

    Synthetic scenes with known ground truth for testing the pipeline end to
    end: a procedurally textured mesh, a ring of cameras, rendered
    photographs and a decoy SfM frame related to the scan by a known
    similarity. Scenes can be perturbed (shifted principal points, rotated
    cameras, re-expressed or noisy SfM clouds) and pipeline outputs scored
    against the truth.

    Generation is deterministic: the same seed and SceneSpec always give a
    bit-identical scene.
"""

from dataclasses import dataclass, field, replace, asdict
import json
import logging
import os

import numpy as np

from scancolor.geometry import (
    PointCloud,
    TriangleMesh,
    SimilarityTransform,
    apply_transform,
    compose,
    invert,
    compute_aabb,
    rotation_about_axis,
    rotation_angle,
)
from scancolor.imageproc import Image
from scancolor.projection import Camera, rasterize, transform_camera, visibility, project_points
from scancolor.formats import BundlerReconstruction, View
from scancolor.formats.PLY import PLY
from scancolor.formats.Bundler import Bundler
from scancolor.formats.ImageFile import ImageFile
from scancolor.formats.Transform import Transform
from scancolor.formats.Correspondences import Correspondences
import scancolor.utils as utils
from scancolor.utils import EvaluationError, SetupError, GeometryError

KINDS = ("plane", "sphere", "vase")
PRESETS = {
    "desk": {"kind": "vase", "n_vertices": 5000, "n_images": 6, "width": 640, "height": 480},
    "museum": {
        "kind": "vase",
        "n_vertices": 1926625,
        "n_images": 35,
        "width": 4008,
        "height": 5344,
    },
}
PERTURBATION_MODES = (
    "principal-shift",
    "camera-rotation",
    "cloud-similarity",
    "gaussian-point-noise",
)
SCENE_FN = "scene.json"
SCAN_FN = "scan.ply"
TRUTH_FN = "truth.ply"
BUNDLE_FN = "bundle.out"
TRUTH_TRANSFORM_FN = "truth_transform.txt"
CORRESPONDENCES_FN = "correspondences.txt"
IMAGES_DIR = "images"

# Camera distance as a multiple of the object's bounding radius
CAMERA_DISTANCE = 3.0
# Fraction of the shorter image side covered by the object's radius
FILL = 0.42
MAX_TRUTH_ROTATION = 0.25
TEXTURED_CONTRAST = 2.0
# Wavelength of the texture detail layer, as a fraction of the bbox diagonal
DETAIL_PERIOD = 0.025
DETAIL_AMPLITUDE = 0.05
N_CORRESPONDENCES = 6

DEFAULT_THRESHOLDS = {
    "color_error_mean": 2.0 / 255,
    "color_error_p95": 6.0 / 255,
    "colored_fraction": 1.0,
    "scale_error": 1e-4,
    "rotation_error": 1e-4,
    "translation_error_relative": 1e-4,
    "displacement_recovery": 0.95,
}


@dataclass(frozen=True)
class SceneSpec:
    """
    Parameters of a synthetic scene.

    Attributes:
        - kind (str): 'plane', 'sphere' or 'vase'.
        - n_vertices (int): Approximate vertex budget.
        - n_images (int): Number of cameras.
        - width, height (int): Image size.
        - arc (float): Degrees of the camera ring covered by the cameras.
        - elevation (float, optional): Camera elevation in degrees;
            alternates in sign for closed objects. Defaults to 20 (60 for
            planes).
        - sparse_fraction (float): Fraction of vertices copied into the SfM
            cloud.
        - renderer (str): 'raster' or 'raycast'.
    """

    kind: str = "vase"
    n_vertices: int = 5000
    n_images: int = 6
    width: int = 640
    height: int = 480
    arc: float = 360.0
    elevation: float = None
    sparse_fraction: float = 1.0
    renderer: str = "raster"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SetupError("Scene kind must be one of {}, got '{}'.".format(KINDS, self.kind))
        if self.n_vertices < 4 or self.n_images < 1:
            raise SetupError("Scenes need >= 4 vertices and >= 1 image.")
        if self.width < 8 or self.height < 8:
            raise SetupError("Images must be at least 8x8 pixels.")
        if not 0 < self.sparse_fraction <= 1:
            raise SetupError("sparse_fraction must lie in (0, 1].")
        if self.renderer not in ("raster", "raycast"):
            raise SetupError("renderer must be 'raster' or 'raycast'.")

    @classmethod
    def from_preset(cls, name, **overrides):
        """
        Builds a spec from a named preset, with None overrides ignored.
        """
        try:
            values = dict(PRESETS[name])
        except KeyError:
            raise SetupError(
                "No preset '{}', available options are {}.".format(name, list(PRESETS))
            ) from None
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @property
    def camera_elevation(self):
        if self.elevation is not None:
            return self.elevation
        return 60.0 if self.kind == "plane" else 20.0


@dataclass(frozen=True)
class Perturbation:
    """
    A recorded perturbation, replayable from its fields.
    """

    mode: str
    magnitude: object
    seed: int = 0
    camera_index: int = 0

    def to_dict(self):
        magnitude = self.magnitude
        if isinstance(magnitude, SimilarityTransform):
            magnitude = {
                "scale": magnitude.scale,
                "rotation": magnitude.rotation.tolist(),
                "translation": magnitude.translation.tolist(),
            }
        elif isinstance(magnitude, (tuple, list, np.ndarray)):
            magnitude = [float(v) for v in magnitude]
        return {
            "mode": self.mode,
            "magnitude": magnitude,
            "seed": self.seed,
            "camera_index": self.camera_index,
        }

    @classmethod
    def from_dict(cls, data):
        magnitude = data["magnitude"]
        if isinstance(magnitude, dict):
            magnitude = SimilarityTransform(
                magnitude["scale"], magnitude["rotation"], magnitude["translation"]
            )
        elif isinstance(magnitude, list):
            magnitude = tuple(magnitude)
        return cls(data["mode"], magnitude, data.get("seed", 0), data.get("camera_index", 0))


@dataclass(frozen=True, eq=False)
class ProceduralTexture:
    """
    A 3D color field: soft checker patterns in each channel, a few Gaussian
    color blobs and a faint detail layer: three plane waves about two
    matching blocks long at desk scale, mixed into each channel.
    """

    period: float
    phase: np.ndarray
    blob_centers: np.ndarray
    blob_colors: np.ndarray
    blob_sigma: float
    detail_period: float
    detail_axes: np.ndarray
    detail_phase: np.ndarray
    detail_mix: np.ndarray

    @classmethod
    def random(cls, rng, extent, n_blobs=6):
        """
        Draws a texture scaled to an object of the given bounding box
        diagonal.
        """
        phase = rng.uniform(0.4, 1.2, size=3)
        centers = rng.uniform(-0.35, 0.35, size=(n_blobs, 3)) * extent
        colors = rng.uniform(-0.2, 0.2, size=(n_blobs, 3))
        axes = rng.normal(size=(3, 3))
        axes /= np.linalg.norm(axes, axis=1, keepdims=True)
        detail_phase = rng.uniform(0.0, 2.0 * np.pi, size=3)
        mix = rng.uniform(-DETAIL_AMPLITUDE, DETAIL_AMPLITUDE, size=(3, 3))
        return cls(
            0.08 * extent,
            phase,
            centers,
            colors,
            0.1 * extent,
            DETAIL_PERIOD * extent,
            axes,
            detail_phase,
            mix,
        )

    def __call__(self, points):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        p = points * (np.pi / self.period) + self.phase
        s1 = np.sin(p[:, 0]) * np.sin(p[:, 1])
        s2 = np.sin(p[:, 1] + 0.7) * np.sin(p[:, 2] + self.phase[0])
        s3 = np.sin(p[:, 2] + 1.3) * np.sin(p[:, 0] + self.phase[1])
        rgb = 0.5 + 0.22 * np.tanh(2.0 * np.stack([s1, s2, s3], axis=1))
        d2 = np.sum((points[:, np.newaxis, :] - self.blob_centers) ** 2, axis=2)
        rgb += np.exp(-d2 / (2.0 * self.blob_sigma ** 2)) @ self.blob_colors
        waves = points @ self.detail_axes.T * (2.0 * np.pi / self.detail_period)
        rgb += np.sin(waves + self.detail_phase) @ self.detail_mix
        return np.clip(rgb, 0.03, 0.97)


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    """
    A generated scene and its ground truth.

    Attributes:
        - spec (SceneSpec): Generation parameters.
        - seed (int): RNG seed.
        - mesh (TriangleMesh): Scan mesh with true vertex colors.
        - texture (ProceduralTexture): The color field.
        - true_cameras (tuple): Cameras the images were rendered with.
        - cameras (tuple): Reported cameras in the scan frame, which differ
            from true_cameras only after camera perturbations.
        - images (tuple): Rendered Images.
        - truth_transform (SimilarityTransform): SfM frame -> scan frame.
        - sfm_cloud (PointCloud): Colored SfM cloud in the SfM frame.
        - sfm_indices (np.ndarray): Mesh vertex each SfM point copies.
        - perturbations (tuple): Perturbations applied, in order.
    """

    spec: SceneSpec
    seed: int
    mesh: TriangleMesh
    texture: ProceduralTexture
    true_cameras: tuple
    cameras: tuple
    images: tuple
    truth_transform: SimilarityTransform
    sfm_cloud: PointCloud
    sfm_indices: np.ndarray
    perturbations: tuple = field(default_factory=tuple)

    @property
    def sfm_cameras(self):
        """
        Reported cameras expressed in the SfM frame.
        """
        to_sfm = invert(self.truth_transform)
        return tuple(transform_camera(cam, to_sfm) for cam in self.cameras)

    def principal_shifts(self):
        """
        Accumulated principal point shift per camera index, as (dx, dy).
        """
        shifts = np.zeros((len(self.cameras), 2))
        for pert in self.perturbations:
            if pert.mode == "principal-shift":
                shifts[pert.camera_index] += np.asarray(pert.magnitude, dtype=np.float64)
        return shifts


def _surface_of_revolution(radius_fn, z_fn, n_vertices):
    segments = max(3, int(round(np.sqrt(2.0 * n_vertices))))
    rings = max(2, int(round((n_vertices - 2) / float(segments))))
    t = (np.arange(rings) + 1.0) / (rings + 1.0)
    phi = 2.0 * np.pi * np.arange(segments) / segments
    tt, pp = np.meshgrid(t, phi, indexing="ij")
    r = radius_fn(tt, pp)
    ring_points = np.stack([r * np.cos(pp), r * np.sin(pp), z_fn(tt)], axis=-1).reshape(-1, 3)
    poles = np.array([[0.0, 0.0, z_fn(0.0)], [0.0, 0.0, z_fn(1.0)]])
    points = np.vstack([ring_points, poles])

    faces = []
    j = np.arange(segments)
    jn = (j + 1) % segments
    for i in range(rings - 1):
        a, b = i * segments + j, i * segments + jn
        c, d = (i + 1) * segments + j, (i + 1) * segments + jn
        faces.append(np.stack([a, b, d], axis=1))
        faces.append(np.stack([a, d, c], axis=1))
    bottom, top = rings * segments, rings * segments + 1
    last = (rings - 1) * segments
    faces.append(np.stack([np.full(segments, bottom), jn, j], axis=1))
    faces.append(np.stack([np.full(segments, top), last + j, last + jn], axis=1))
    return points, np.vstack(faces)


def make_mesh(kind, n_vertices):
    """
    Builds the untextured scene geometry.

    Args:
        - kind (str): 'plane' (z = 0 over [-1, 1]^2), 'sphere' (unit sphere)
            or 'vase' (closed lobed surface of revolution, height 2).
        - n_vertices (int): Approximate vertex count.

    Returns:
        A TriangleMesh.
    """
    if kind == "plane":
        side = max(2, int(round(np.sqrt(n_vertices))))
        xs = np.linspace(-1.0, 1.0, side)
        gx, gy = np.meshgrid(xs, xs)
        points = np.stack([gx.ravel(), gy.ravel(), np.zeros(side * side)], axis=1)
        idx = np.arange(side * side).reshape(side, side)
        a, b = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
        c, d = idx[1:, :-1].ravel(), idx[1:, 1:].ravel()
        faces = np.vstack([np.stack([a, b, d], axis=1), np.stack([a, d, c], axis=1)])
    elif kind == "sphere":
        points, faces = _surface_of_revolution(
            lambda t, phi: np.sin(np.pi * t), lambda t: -np.cos(np.pi * np.asarray(t)), n_vertices
        )
    elif kind == "vase":

        def radius(t, phi):
            body = np.sin(np.pi * t) * (0.8 + 0.25 * np.cos(1.5 * np.pi * t))
            # Spout-side bulge and faint lobes break rotational symmetry
            lobes = 1.0 + 0.12 * np.cos(phi) * np.sin(np.pi * t) ** 2 + 0.04 * np.sin(3.0 * phi)
            return body * lobes

        points, faces = _surface_of_revolution(
            radius, lambda t: 2.0 * np.asarray(t) - 1.0, n_vertices
        )
    else:
        raise SetupError("Unknown scene kind '{}'.".format(kind))
    return TriangleMesh(PointCloud(points), faces)


def look_at(eye, target, up=(0.0, 0.0, 1.0)):
    """
    World-to-camera rotation and translation of a camera at eye looking at
    target, x right, y down, z forward.
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    up = np.asarray(up, dtype=np.float64)
    if np.linalg.norm(np.cross(forward, up)) < 1e-9:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    return rotation, -rotation @ eye


def ring_cameras(spec, mesh):
    """
    Cameras spread over an arc of a ring around the object, all looking at
    its bounding box centre.
    """
    center = compute_aabb(mesh).center
    rho = float(np.max(np.linalg.norm(mesh.points - center, axis=1)))
    dist = CAMERA_DISTANCE * rho
    focal = FILL * min(spec.width, spec.height) * np.sqrt(dist ** 2 - rho ** 2) / rho
    n = spec.n_images
    cameras = []
    for i in range(n):
        if spec.kind == "plane" and n == 1:
            eye = center + np.array([0.0, 0.0, dist])
        else:
            if spec.arc >= 360.0:
                azimuth = 2.0 * np.pi * i / n
            elif n == 1:
                azimuth = 0.0
            else:
                azimuth = np.radians(-spec.arc / 2.0 + spec.arc * i / (n - 1))
            elevation = np.radians(spec.camera_elevation)
            if spec.kind != "plane" and i % 2 == 1:
                elevation = -elevation
            eye = center + dist * np.array(
                [
                    np.cos(elevation) * np.cos(azimuth),
                    np.cos(elevation) * np.sin(azimuth),
                    np.sin(elevation),
                ]
            )
        rotation, translation = look_at(eye, center)
        cameras.append(Camera(focal, 0.0, 0.0, rotation, translation, spec.width, spec.height))
    return cameras


def raycast(mesh, cam, max_pairs=2000000):
    """
    Casts one ray through every pixel centre and intersects it with every
    triangle (Moller-Trumbore). Independent of the rasterizer.

    Args:
        - mesh (TriangleMesh): Scene mesh.
        - cam (Camera): Undistorted camera.
        - max_pairs (int): Ray-triangle pairs tested per batch.

    Returns:
        A tuple (depth, hits): (h, w) camera depth, +inf on misses, and
        (h, w, 3) hit positions, NaN on misses.
    """
    if cam.k1 != 0 or cam.k2 != 0:
        raise GeometryError("Ray casting supports undistorted cameras only.")
    height, width = cam.shape
    cols, rows = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    dirs_cam = np.stack(
        [(cols - cam.cx) / cam.focal, (rows - cam.cy) / cam.focal, np.ones_like(cols)], axis=-1
    ).reshape(-1, 3)
    # Unnormalised, so the ray parameter equals camera depth
    dirs = dirs_cam @ cam.rotation
    origin = cam.center

    tri = mesh.points[mesh.faces]
    v0 = tri[:, 0]
    e1 = tri[:, 1] - v0
    e2 = tri[:, 2] - v0
    tvec = origin - v0
    qvec = np.cross(tvec, e1)
    t_num = np.einsum("fj,fj->f", qvec, e2)

    depth = np.full(len(dirs), np.inf)
    batch = max(1, max_pairs // max(1, len(tri)))
    for start in range(0, len(dirs), batch):
        d = dirs[start : start + batch]
        pvec = np.cross(d[:, np.newaxis, :], e2[np.newaxis, :, :])
        det = np.einsum("fj,rfj->rf", e1, pvec)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / det
            u = np.einsum("fj,rfj->rf", tvec, pvec) * inv
            v = (d @ qvec.T) * inv
            t = t_num[np.newaxis, :] * inv
        hit = (np.abs(det) > 1e-15) & (u >= -1e-9) & (v >= -1e-9) & (u + v <= 1 + 1e-9) & (t > 0)
        t = np.where(hit, t, np.inf)
        depth[start : start + batch] = t.min(axis=1)

    hits = np.full((len(dirs), 3), np.nan)
    found = np.isfinite(depth)
    hits[found] = origin + depth[found, np.newaxis] * dirs[found]
    return depth.reshape(height, width), hits.reshape(height, width, 3)


def render_image(mesh, cam, texture, renderer="raster"):
    """
    Renders the textured mesh. The background is black.

    Args:
        - mesh (TriangleMesh): Scene mesh.
        - cam (Camera): Camera to render with.
        - texture (ProceduralTexture): Color field evaluated at the exact
            surface point seen by each pixel.
        - renderer (str): 'raster' for the projection module's rasterizer,
            'raycast' for the independent ray caster.

    Returns:
        An Image.
    """
    if renderer == "raycast":
        _, surface = raycast(mesh, cam)
    else:
        surface = rasterize(mesh, cam).surface_points(mesh)
    pixels = np.zeros(surface.shape)
    covered = np.all(np.isfinite(surface), axis=-1)
    pixels[covered] = texture(surface[covered])
    return Image(pixels)


def random_similarity(rng, extent, scale=None, max_angle=MAX_TRUTH_ROTATION):
    """
    A random similarity with a bounded rotation angle, so that a bounding box
    initialisation (which has no rotation) lies within SICP's basin.
    """
    if scale is None:
        scale = float(np.exp(rng.uniform(np.log(0.5), np.log(2.0))))
    axis = rng.normal(size=3)
    angle = rng.uniform(0.0, max_angle)
    translation = rng.uniform(-1.0, 1.0, size=3) * extent
    return SimilarityTransform(scale, rotation_about_axis(axis, angle), translation)


def generate_scene(seed, spec=None):
    """
    Generates a synthetic scene.

    Args:
        - seed (int): RNG seed.
        - spec (SceneSpec, optional): Scene parameters, the desk preset by
            default.

    Returns:
        A SyntheticScene.
    """
    if spec is None:
        spec = SceneSpec.from_preset("desk")
    rng = np.random.default_rng(seed)
    mesh = make_mesh(spec.kind, spec.n_vertices)
    extent = compute_aabb(mesh).diagonal
    texture = ProceduralTexture.random(rng, extent)
    mesh = mesh.with_vertices(mesh.vertices.with_colors(texture(mesh.points)))

    cameras = tuple(ring_cameras(spec, mesh))
    images = tuple(render_image(mesh, cam, texture, spec.renderer) for cam in cameras)

    truth = random_similarity(rng, extent)
    n = len(mesh.vertices)
    if spec.sparse_fraction < 1:
        count = max(3, int(round(spec.sparse_fraction * n)))
        sfm_indices = np.sort(rng.choice(n, size=count, replace=False))
    else:
        sfm_indices = np.arange(n)
    sfm_cloud = apply_transform(invert(truth), mesh.vertices.subset(sfm_indices))

    logging.info(
        "Generated {} scene: {} vertices, {} faces, {} images of {}x{}".format(
            spec.kind, n, len(mesh.faces), len(images), spec.width, spec.height
        )
    )
    return SyntheticScene(
        spec, seed, mesh, texture, cameras, cameras, images, truth, sfm_cloud, sfm_indices
    )


def perturb_scene(scene, mode, magnitude, seed=0, camera_index=0):
    """
    Applies a perturbation, recording it for scoring.

    Modes:
        - 'principal-shift': magnitude (dx, dy) px added to the reported
            principal point of camera_index. Images are unchanged, so the
            reported camera's projections move by exactly (dx, dy).
        - 'camera-rotation': reported camera_index rotated about its centre
            by magnitude milliradians around a random axis.
        - 'cloud-similarity': the SfM cloud re-expressed by a similarity
            Q, either given as a SimilarityTransform or, for a number s,
            drawn with scale s and a random bounded rotation and
            translation. The truth transform absorbs Q^-1.
        - 'gaussian-point-noise': isotropic noise with sigma = magnitude
            times the SfM cloud's bounding box diagonal.

    Args:
        - scene (SyntheticScene): Input scene.
        - mode (str): One of the modes above.
        - magnitude: Mode-dependent magnitude.
        - seed (int): RNG seed for random modes.
        - camera_index (int): Camera for camera modes.

    Returns:
        A new SyntheticScene.
    """
    if mode not in PERTURBATION_MODES:
        raise SetupError(
            "Perturbation must be one of {}, got '{}'.".format(PERTURBATION_MODES, mode)
        )
    if mode in ("principal-shift", "camera-rotation") and not (
        0 <= camera_index < len(scene.cameras)
    ):
        raise SetupError("Scene has no camera {}.".format(camera_index))
    rng = np.random.default_rng(seed)
    record = Perturbation(mode, magnitude, seed, camera_index)
    perturbations = scene.perturbations + (record,)
    cameras = list(scene.cameras)

    if mode == "principal-shift":
        dx, dy = (float(v) for v in magnitude)
        cam = cameras[camera_index]
        cameras[camera_index] = replace(cam, cx=cam.cx + dx, cy=cam.cy + dy)
        return replace(scene, cameras=tuple(cameras), perturbations=perturbations)

    if mode == "camera-rotation":
        angle = float(magnitude) * 1e-3
        delta = rotation_about_axis(rng.normal(size=3), angle)
        cam = cameras[camera_index]
        cameras[camera_index] = replace(
            cam, rotation=delta @ cam.rotation, translation=delta @ cam.translation
        )
        return replace(scene, cameras=tuple(cameras), perturbations=perturbations)

    if mode == "cloud-similarity":
        if isinstance(magnitude, SimilarityTransform):
            q = magnitude
        else:
            extent = compute_aabb(scene.sfm_cloud).diagonal
            q = random_similarity(rng, extent, scale=float(magnitude))
            record = Perturbation(mode, q, seed, camera_index)
            perturbations = scene.perturbations + (record,)
        return replace(
            scene,
            sfm_cloud=apply_transform(q, scene.sfm_cloud),
            truth_transform=compose(scene.truth_transform, invert(q)),
            perturbations=perturbations,
        )

    sigma = float(magnitude) * compute_aabb(scene.sfm_cloud).diagonal
    noise = rng.normal(scale=1.0, size=scene.sfm_cloud.points.shape) * sigma
    return replace(
        scene,
        sfm_cloud=PointCloud(scene.sfm_cloud.points + noise, colors=scene.sfm_cloud.colors),
        perturbations=perturbations,
    )


def scene_views(scene):
    """
    Bundler view lists of the SfM points: the cameras that truly see each
    point, with its position under the reported camera.
    """
    points = scene.mesh.points[scene.sfm_indices]
    eps = 0.005 * compute_aabb(scene.mesh).diagonal
    seen = []
    for true_cam, cam in zip(scene.true_cameras, scene.cameras):
        depth = rasterize(scene.mesh, true_cam).depth
        visible, _, _, _ = visibility(points, true_cam, depth, eps)
        uv, _, _ = project_points(cam, points)
        seen.append((visible, uv))

    views = []
    keys = np.zeros(len(scene.cameras), dtype=np.int64)
    for j in range(len(points)):
        point_views = []
        for c, (visible, uv) in enumerate(seen):
            if visible[j]:
                point_views.append(View(c, int(keys[c]), float(uv[j, 0]), float(uv[j, 1])))
                keys[c] += 1
        views.append(tuple(point_views))
    return views


def scene_correspondences(scene, n_pairs=N_CORRESPONDENCES):
    """
    A few (SfM point, scan vertex) pairs spread over the object, as a user
    would pick them.
    """
    rng = np.random.default_rng(scene.seed + 1)
    picks = rng.choice(len(scene.sfm_indices), size=min(n_pairs, len(scene.sfm_indices)), replace=False)
    return [
        (tuple(scene.sfm_cloud.points[i]), tuple(scene.mesh.points[scene.sfm_indices[i]]))
        for i in np.sort(picks)
    ]


def image_filename(index):
    return "cam_{:03d}.png".format(index)


def save_scene(scene, folder, overwrite=False):
    """
    Writes a scene as pipeline inputs plus ground truth.

    The folder receives scan.ply (uncolored mesh), truth.ply (colored mesh),
    bundle.out (SfM cameras and cloud), images/, truth_transform.txt,
    correspondences.txt and scene.json (the parameters that regenerate the
    scene).

    Bundler files don't store principal points, so cameras with a shifted
    principal point are written centred and their images re-rendered with
    the opposite shift, keeping the offset between reported projections and
    image content identical to the in-memory scene.

    Args:
        - scene (SyntheticScene): The scene.
        - folder (str): Output folder.
        - overwrite (bool): Whether existing files may be replaced.

    Returns:
        A list of the files written, relative to folder.
    """
    utils.ensure_folder(os.path.join(folder, IMAGES_DIR))
    written = []

    def out(name):
        written.append(name)
        return os.path.join(folder, name)

    scan = TriangleMesh(PointCloud(scene.mesh.points), scene.mesh.faces)
    PLY().save_file(scan, out(SCAN_FN), overwrite)
    PLY().save_file(scene.mesh, out(TRUTH_FN), overwrite)

    shifts = scene.principal_shifts()
    for i, (true_cam, image) in enumerate(zip(scene.true_cameras, scene.images)):
        if np.any(shifts[i] != 0):
            shifted = replace(true_cam, cx=true_cam.cx - shifts[i][0], cy=true_cam.cy - shifts[i][1])
            image = render_image(scene.mesh, shifted, scene.texture, scene.spec.renderer)
        ImageFile().save_file(image, out(os.path.join(IMAGES_DIR, image_filename(i))), overwrite)

    recon = BundlerReconstruction(scene.sfm_cameras, scene.sfm_cloud, scene_views(scene))
    Bundler().save_file(recon, out(BUNDLE_FN), overwrite)
    Transform().save_file(scene.truth_transform, out(TRUTH_TRANSFORM_FN), overwrite)
    Correspondences().save_file(scene_correspondences(scene), out(CORRESPONDENCES_FN), overwrite)

    meta = {
        "seed": scene.seed,
        "spec": asdict(scene.spec),
        "perturbations": [p.to_dict() for p in scene.perturbations],
    }
    utils.save_json_file(meta, out(SCENE_FN), overwrite)
    logging.info("Saved scene to {}".format(folder))
    return written


def load_scene(folder):
    """
    Regenerates a saved scene from its scene.json.

    Args:
        - folder (str): Folder written by save_scene.

    Returns:
        A SyntheticScene.
    """
    raw = utils.read_bytes(os.path.join(folder, SCENE_FN))
    try:
        meta = json.loads(raw.decode("utf-8"))
        spec = SceneSpec(**meta["spec"])
        seed = int(meta["seed"])
        perturbations = [Perturbation.from_dict(p) for p in meta.get("perturbations", [])]
    except (ValueError, KeyError, TypeError) as ex:
        raise utils.DataParseError("Invalid {}: {}".format(SCENE_FN, ex)) from None

    scene = generate_scene(seed, spec)
    for pert in perturbations:
        scene = perturb_scene(scene, pert.mode, pert.magnitude, pert.seed, pert.camera_index)
    return scene


@dataclass
class ScoreReport:
    """
    Errors of a pipeline run against a scene's ground truth. Fields that
    weren't measured are None.
    """

    n_points: int
    n_colored: int
    color_error_mean: float
    color_error_p95: float
    scale_error: float = None
    rotation_error: float = None
    translation_error: float = None
    translation_error_relative: float = None
    displacement_recovery: float = None
    n_displacement_checks: int = 0

    @property
    def colored_fraction(self):
        return self.n_colored / float(self.n_points) if self.n_points else 0.0

    def check(self, thresholds=None):
        """
        Compares every measured quantity with its threshold.

        Args:
            - thresholds (dict, optional): Overrides of DEFAULT_THRESHOLDS.

        Returns:
            A dict of criterion name -> bool.
        """
        limits = dict(DEFAULT_THRESHOLDS)
        limits.update(thresholds or {})
        results = {}
        for name, limit in limits.items():
            value = getattr(self, name)
            if value is None:
                continue
            if name in ("colored_fraction", "displacement_recovery"):
                results[name] = bool(value >= limit)
            else:
                results[name] = bool(value < limit)
        return results

    @property
    def passed(self):
        return all(self.check().values())

    def to_dict(self):
        out = asdict(self)
        out["colored_fraction"] = self.colored_fraction
        out["checks"] = self.check()
        return out


def color_errors(truth, colors):
    """
    Mean absolute per-channel difference of each point's color from its
    true color.
    """
    return np.mean(np.abs(np.asarray(colors) - np.asarray(truth)), axis=1)


def evaluate_run(scene, colored, transform=None, records=None, uncolored=None):
    """
    Scores pipeline output against a scene.

    Args:
        - scene (SyntheticScene): The scene the inputs were generated from.
        - colored (PointCloud or TriangleMesh): Colored scan, one point per
            mesh vertex in the same order.
        - transform (SimilarityTransform, optional): Estimated SfM -> scan
            transform.
        - records (list, optional): DisplacementRecords from colorization.
        - uncolored (list, optional): Indices of points left uncolored,
            which are scored by colored_fraction only.

    Returns:
        A ScoreReport.
    """
    cloud = colored.vertices if isinstance(colored, TriangleMesh) else colored
    n = len(scene.mesh.vertices)
    if len(cloud) != n:
        raise EvaluationError(
            "Run has {} points but the scene has {} vertices.".format(len(cloud), n)
        )
    if cloud.colors is None:
        raise EvaluationError("Run output has no colors.")

    # Uncolored points count against colored_fraction, not the color error
    colored_mask = np.ones(n, dtype=bool)
    if uncolored is not None:
        colored_mask[np.asarray(uncolored, dtype=np.int64)] = False
    errors = color_errors(scene.mesh.vertices.colors[colored_mask], cloud.colors[colored_mask])
    report = ScoreReport(
        n_points=n,
        n_colored=int(colored_mask.sum()),
        color_error_mean=float(np.mean(errors)) if len(errors) else float("nan"),
        color_error_p95=float(np.percentile(errors, 95)) if len(errors) else float("nan"),
    )

    if transform is not None:
        truth = scene.truth_transform
        diag = compute_aabb(scene.mesh).diagonal
        report.scale_error = abs(transform.scale - truth.scale) / truth.scale
        report.rotation_error = rotation_angle(transform.rotation @ truth.rotation.T)
        report.translation_error = float(np.linalg.norm(transform.translation - truth.translation))
        report.translation_error_relative = report.translation_error / diag

    if records is not None:
        shifts = scene.principal_shifts()
        hits, checks = 0, 0
        for rec in records:
            if rec.contrast < TEXTURED_CONTRAST:
                continue
            for shift in rec.targets:
                expected = shifts[rec.reference_id] - shifts[shift.image_id]
                if not np.any(expected != 0):
                    continue
                checks += 1
                if shift.matched and max(
                    abs(shift.dx - expected[0]), abs(shift.dy - expected[1])
                ) <= 1.0:
                    hits += 1
        report.n_displacement_checks = checks
        if checks > 0:
            report.displacement_recovery = hits / float(checks)

    logging.info(
        "Score: color error mean {:.5f}, p95 {:.5f}".format(
            report.color_error_mean, report.color_error_p95
        )
    )
    return report
