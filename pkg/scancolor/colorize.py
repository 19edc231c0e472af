"""
    colorize.py
    ~~~~~~~~~~~

    Projects photographic color onto scan points.

    For each point the best-weighted images are chosen, the projections into
    the secondary images are corrected by block matching against the
    reference (highest-weight) image, and the point's color is the
    mask-weighted mean of the corrected pixel colors.
"""

from collections import Counter
from dataclasses import dataclass, field
import logging
import time

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from scipy.spatial import cKDTree

from scancolor.config import RunConfig
from scancolor.geometry import PointCloud, TriangleMesh
from scancolor.imageproc import bilinear_sample, rgb_to_ycbcr, extract_block
from scancolor.projection import visibility, default_visibility_epsilon
from scancolor.utils import ColorizationError, GeometryError

TIE_TOL = 1e-9
DISPLACEMENT_COLUMNS = ["point", "image", "dx", "dy", "error", "reference", "contrast"]


@dataclass(frozen=True, eq=False)
class ImageView:
    """
    One photograph prepared for colorization: its scan-frame camera, pixels,
    YCbCr conversion and quality masks.
    """

    image_id: int
    camera: object
    image: object
    masks: object
    ycbcr: np.ndarray = None

    def __post_init__(self):
        if (self.image.height, self.image.width) != self.camera.shape:
            raise GeometryError(
                "Image {} is {}x{} but its camera expects {}x{}.".format(
                    self.image_id,
                    self.image.width,
                    self.image.height,
                    self.camera.width,
                    self.camera.height,
                )
            )
        if self.ycbcr is None:
            object.__setattr__(self, "ycbcr", rgb_to_ycbcr(self.image.pixels))


@dataclass(frozen=True)
class ProjectionEntry:
    image_id: int
    u: float
    v: float
    weight: float
    visible: bool


@dataclass(frozen=True)
class PointProjectionSet:
    """
    Projections of one point into every image.

    Attributes:
        - point_index (int): Index of the point in the scan.
        - entries (tuple): One ProjectionEntry per image.
    """

    point_index: int
    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        ids = [e.image_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError("At most one projection entry per image.")
        for entry in self.entries:
            if entry.weight > 0 and not entry.visible:
                raise ValueError(
                    "Image {} has positive weight but isn't visible.".format(
                        entry.image_id
                    )
                )

    def entry(self, image_id):
        return next(e for e in self.entries if e.image_id == image_id)


@dataclass(frozen=True)
class Displacement:
    """
    Result of one block-matching search.

    Attributes:
        - image_id (int): Target image.
        - dx, dy (int): Offset from the target projection, None on no match.
        - error (float): Match error of the chosen offset.
        - evaluations (int): Number of candidate blocks scored.
    """

    image_id: int
    dx: int = None
    dy: int = None
    error: float = None
    evaluations: int = 0

    @property
    def matched(self):
        return self.dx is not None


@dataclass(frozen=True)
class DisplacementRecord:
    """
    The block-matching results of one point.

    Attributes:
        - point_index (int): Scan point index.
        - reference_id (int): Image the blocks were matched against.
        - targets (tuple): One Displacement per secondary image.
        - contrast (float): Standard deviation of the reference block's Y
            channel; low values mean the block carries little texture.
    """

    point_index: int
    reference_id: int
    targets: tuple
    contrast: float

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))


@dataclass(frozen=True)
class ColoredPoint:
    point_index: int
    rgb: tuple
    n_images: int
    colored: bool = True


@dataclass
class ColorizeReport:
    """
    Summary of a colorization run.

    Timings are kept separately from the other fields so that reports of
    identical runs serialize identically.
    """

    n_points: int
    n_processed: int = 0
    n_colored: int = 0
    uncolored: list = field(default_factory=list)
    displacement_histogram: dict = field(default_factory=dict)
    n_searches: int = 0
    n_no_match: int = 0
    block_evaluations: list = field(default_factory=list)
    local_correction: bool = True
    timings: dict = field(default_factory=dict)

    def to_dict(self):
        """
        The report as JSON-serializable data, without timings.
        """
        histogram = {
            "{},{}".format(dx, dy): count
            for (dx, dy), count in sorted(self.displacement_histogram.items())
        }
        evaluations = np.asarray(self.block_evaluations, dtype=np.int64)
        return {
            "n_points": self.n_points,
            "n_processed": self.n_processed,
            "n_colored": self.n_colored,
            "n_uncolored": len(self.uncolored),
            "uncolored": list(self.uncolored),
            "local_correction": self.local_correction,
            "n_searches": self.n_searches,
            "n_no_match": self.n_no_match,
            "displacement_histogram": histogram,
            "max_block_evaluations": int(evaluations.max()) if evaluations.size else 0,
            "total_block_evaluations": int(evaluations.sum()),
        }


def select_best_images(proj, k):
    """
    The images with the highest mask weight at the point's projection.

    Only visible entries with positive weight are candidates. Ties are broken
    by ascending image id.

    Args:
        - proj (PointProjectionSet): The point's projections.
        - k (int): Maximum number of images.

    Returns:
        A list of up to k image ids, best first. Empty if the point is seen
        by no image.
    """
    if k < 1:
        raise ValueError("k must be >= 1, got {}.".format(k))
    candidates = [e for e in proj.entries if e.visible and e.weight > 0]
    candidates.sort(key=lambda e: (-e.weight, e.image_id))
    return [e.image_id for e in candidates[:k]]


def local_displacement(ref_view, ref_uv, target_view, target_uv, block_size, search_radius):
    """
    Finds the integer offset that best aligns a point's neighbourhood in a
    target image with its neighbourhood in the reference image.

    Blocks of block_size^2 YCbCr samples are taken around the exact
    projections. Every offset (dx, dy) in [-W, W]^2 whose shifted centre
    lies inside the target image is scored with the mean of the three
    mean-subtracted channel MSEs. Ties are broken by the RGB distance
    between the block centres, then by |dx| + |dy|, then by (dx, dy).

    Args:
        - ref_view (ImageView): Reference image.
        - ref_uv (tuple): Projection in the reference image.
        - target_view (ImageView): Target image.
        - target_uv (tuple): Projection in the target image.
        - block_size (int): Odd block side N.
        - search_radius (int): W.

    Returns:
        A Displacement; unmatched when no candidate centre is in the image.
    """
    ru, rv = ref_uv
    tu, tv = target_uv
    radius = int(search_radius)
    half = block_size // 2
    offsets = np.arange(-radius, radius + 1)
    height, width = target_view.camera.shape

    cand_u = tu + offsets
    cand_v = tv + offsets
    valid = ((cand_v >= 0) & (cand_v <= height - 1))[:, np.newaxis] & (
        (cand_u >= 0) & (cand_u <= width - 1)
    )[np.newaxis, :]
    n_valid = int(valid.sum())
    if n_valid == 0:
        return Displacement(target_view.image_id)

    reference = extract_block(ref_view.ycbcr, ru, rv, block_size).samples
    span = np.arange(-(radius + half), radius + half + 1, dtype=np.float64)
    grid_u, grid_v = np.meshgrid(tu + span, tv + span)
    window = bilinear_sample(target_view.ycbcr, grid_u, grid_v)

    # (2W+1, 2W+1, 3, N, N) candidate blocks, rows indexed by dy
    candidates = sliding_window_view(window, (block_size, block_size), axis=(0, 1))
    diff = candidates - reference.transpose(2, 0, 1)
    diff = diff - diff.mean(axis=(-2, -1), keepdims=True)
    mse = np.mean(diff ** 2, axis=(-2, -1))
    error = (mse[..., 0] + mse[..., 1] + mse[..., 2]) / 3.0
    error = np.where(valid, error, np.inf)

    best = error.min()
    rows, cols = np.nonzero(error <= best + TIE_TOL)
    if len(rows) > 1:
        ref_centre = bilinear_sample(ref_view.image.pixels, np.array([ru]), np.array([rv]))[0]
        centres = bilinear_sample(
            target_view.image.pixels, tu + offsets[cols], tv + offsets[rows]
        )
        colour_dist = np.linalg.norm(centres - ref_centre, axis=1)
        dxs, dys = offsets[cols], offsets[rows]
        order = np.lexsort((dys, dxs, np.abs(dxs) + np.abs(dys), colour_dist))
        pick = order[0]
    else:
        pick = 0
    dx = int(offsets[cols[pick]])
    dy = int(offsets[rows[pick]])
    return Displacement(
        target_view.image_id, dx, dy, float(error[rows[pick], cols[pick]]), n_valid
    )


def block_contrast(view, uv, block_size):
    """
    Standard deviation of the Y channel of the block around a projection.
    """
    block = extract_block(view.ycbcr, uv[0], uv[1], block_size)
    return float(np.std(block.samples[:, :, 0]))


def blend_point_color(point_index, best_images, displacements, views, proj):
    """
    Weighted mean color of a point.

    The color of each image is sampled bilinearly at its projection shifted
    by the image's displacement (none for the reference image); the weight is
    the combined mask at the unshifted projection. Images whose search found
    no match are left out.

    Args:
        - point_index (int): Scan point index.
        - best_images (list): Image ids, reference first.
        - displacements (dict): image id -> Displacement for the secondary
            images. Images without an entry are sampled unshifted.
        - views (dict): image id -> ImageView.
        - proj (PointProjectionSet): The point's projections.

    Returns:
        A ColoredPoint, flagged uncolored when no weight remains.
    """
    total = 0.0
    accum = np.zeros(3)
    used = 0
    for image_id in best_images:
        entry = proj.entry(image_id)
        du, dv = 0, 0
        shift = displacements.get(image_id)
        if shift is not None:
            if not shift.matched:
                continue
            du, dv = shift.dx, shift.dy
        colour = bilinear_sample(
            views[image_id].image.pixels,
            np.array([entry.u + du]),
            np.array([entry.v + dv]),
        )[0]
        accum += entry.weight * colour
        total += entry.weight
        used += 1

    if total <= 0:
        return ColoredPoint(point_index, None, 0, colored=False)
    rgb = np.clip(accum / total, 0.0, 1.0)
    return ColoredPoint(point_index, tuple(float(c) for c in rgb), used)


def extract_patch(cloud, center, n_points):
    """
    Indices of the n points nearest a centre, in ascending index order.

    Args:
        - cloud (PointCloud or TriangleMesh): Scan geometry.
        - center (array-like): Patch centre.
        - n_points (int): Patch size, capped at the cloud size.

    Returns:
        np.ndarray of point indices.
    """
    points = cloud.points
    n_points = min(int(n_points), len(points))
    if n_points < 1:
        raise GeometryError("Patch size must be at least 1.")
    _, idx = cKDTree(points).query(np.asarray(center, dtype=np.float64), k=n_points)
    return np.sort(np.atleast_1d(idx))


def project_scan(points, views, eps):
    """
    Projections, visibility and weights of every point in every view.

    Returns:
        A tuple (uv, visible, weight) of arrays shaped (n_views, n_points, 2),
        (n_views, n_points) and (n_views, n_points).
    """
    n = len(points)
    uv = np.full((len(views), n, 2), np.nan)
    visible = np.zeros((len(views), n), dtype=bool)
    weight = np.zeros((len(views), n))
    for i, view in enumerate(views):
        if not view.camera.usable:
            continue
        vis, proj, cols, rows = visibility(points, view.camera, view.masks.depth, eps)
        uv[i] = proj
        visible[i] = vis
        weight[i] = np.where(vis, view.masks.combined.weight[rows, cols], 0.0)
    return uv, visible, weight


def colorize_cloud(scan, views, cfg=None, patch=None):
    """
    Colors every scan point (or every point of a patch).

    Args:
        - scan (PointCloud or TriangleMesh): Scan geometry.
        - views (list): ImageView per photograph, cameras already in the scan
            frame.
        - cfg (RunConfig, optional): Run parameters.
        - patch (np.ndarray, optional): Indices of the points to process.
            Others get the sentinel color and count as outside the patch.

    Returns:
        A tuple (cloud, report, records): the scan vertices with colors, a
        ColorizeReport and the list of DisplacementRecords.
    """
    if cfg is None:
        cfg = RunConfig()
    start = time.perf_counter()
    cloud = scan.vertices if isinstance(scan, TriangleMesh) else scan
    points = cloud.points
    indices = np.arange(len(points)) if patch is None else np.asarray(patch, dtype=np.int64)
    eps = cfg.visibility_epsilon
    if eps is None:
        eps = default_visibility_epsilon(scan)

    uv, visible, weight = project_scan(points[indices], views, eps)
    if not visible.any():
        raise ColorizationError("No camera sees any scan point.")
    view_by_id = {view.image_id: view for view in views}
    ids = [view.image_id for view in views]
    width = max(view.camera.width for view in views)
    block_size, search_radius = cfg.scaled_for_width(width)
    if (block_size, search_radius) != (cfg.block_size, cfg.search_radius):
        logging.info(
            "Scaled block size to {} and search radius to {} for {} px images".format(
                block_size, search_radius, width
            )
        )
    timings = {"projection": time.perf_counter() - start}

    colors = np.tile(np.asarray(cfg.uncolored_color), (len(points), 1))
    report = ColorizeReport(
        n_points=len(points),
        n_processed=len(indices),
        local_correction=cfg.local_correction,
    )
    histogram = Counter()
    records = []
    evaluations = np.zeros(len(indices), dtype=np.int64)

    start = time.perf_counter()
    for j, point_index in enumerate(indices.tolist()):
        proj = PointProjectionSet(
            point_index,
            [
                ProjectionEntry(
                    ids[i],
                    float(uv[i, j, 0]),
                    float(uv[i, j, 1]),
                    float(weight[i, j]),
                    bool(visible[i, j]),
                )
                for i in range(len(views))
            ],
        )
        best = select_best_images(proj, cfg.best_k)
        if len(best) == 0:
            report.uncolored.append(point_index)
            continue

        displacements = {}
        if cfg.local_correction and len(best) > 1:
            ref = proj.entry(best[0])
            ref_uv = (ref.u, ref.v)
            for image_id in best[1:]:
                target = proj.entry(image_id)
                shift = local_displacement(
                    view_by_id[best[0]],
                    ref_uv,
                    view_by_id[image_id],
                    (target.u, target.v),
                    block_size,
                    search_radius,
                )
                displacements[image_id] = shift
                evaluations[j] += shift.evaluations
                report.n_searches += 1
                if shift.matched:
                    histogram[(shift.dx, shift.dy)] += 1
                else:
                    report.n_no_match += 1
            records.append(
                DisplacementRecord(
                    point_index,
                    best[0],
                    [displacements[i] for i in best[1:]],
                    block_contrast(view_by_id[best[0]], ref_uv, block_size),
                )
            )

        colored = blend_point_color(point_index, best, displacements, view_by_id, proj)
        if not colored.colored:
            report.uncolored.append(point_index)
            continue
        colors[point_index] = colored.rgb
        report.n_colored += 1

    timings["blending"] = time.perf_counter() - start
    report.displacement_histogram = dict(histogram)
    report.block_evaluations = evaluations.tolist()
    report.timings = timings

    if len(report.uncolored) > 0:
        logging.warning("{} points could not be colored.".format(len(report.uncolored)))
    logging.info(
        "Colored {} of {} points, {} displacement searches".format(
            report.n_colored, report.n_processed, report.n_searches
        )
    )
    return cloud.with_colors(colors), report, records


def displacements_to_dataframe(records):
    """
    Flattens displacement records into one row per (point, target image).

    Args:
        - records (list): DisplacementRecords.

    Returns:
        A pandas.DataFrame with columns point, image, dx, dy, error,
        reference, contrast. Unmatched searches have empty dx, dy and error.
    """
    rows = [
        [
            rec.point_index,
            shift.image_id,
            shift.dx,
            shift.dy,
            shift.error,
            rec.reference_id,
            rec.contrast,
        ]
        for rec in records
        for shift in rec.targets
    ]
    df = pd.DataFrame(rows, columns=DISPLACEMENT_COLUMNS)
    for column in ("dx", "dy"):
        df[column] = df[column].astype("Int64")
    return df


def records_from_dataframe(df):
    """
    Rebuilds displacement records from the output of
    displacements_to_dataframe.

    Args:
        - df (pandas.DataFrame): Flattened records.

    Returns:
        A list of DisplacementRecords in first-appearance order of points.
    """
    missing = set(DISPLACEMENT_COLUMNS) - set(df.columns)
    if missing:
        raise ValueError("Displacement table lacks columns {}.".format(sorted(missing)))
    records = []
    for point_index, group in df.groupby("point", sort=False):
        targets = []
        for row in group.itertuples(index=False):
            if pd.isna(row.dx):
                targets.append(Displacement(int(row.image)))
            else:
                targets.append(
                    Displacement(int(row.image), int(row.dx), int(row.dy), float(row.error))
                )
        first = group.iloc[0]
        records.append(
            DisplacementRecord(
                int(point_index), int(first["reference"]), targets, float(first["contrast"])
            )
        )
    return records
