"""
    registration.py
    ~~~~~~~~~~~~~~~

    Aligns the SfM point cloud (source) with the scan (target): a coarse
    similarity from bounding boxes or picked correspondences, refined by
    Scale Iterative Closest Point with a bidirectional distance objective.
"""

from dataclasses import dataclass
import logging

import numpy as np
from scipy.spatial import cKDTree

from scancolor.config import RunConfig
from scancolor.geometry import SimilarityTransform, compute_aabb
from scancolor.utils import (
    GeometryError,
    DegenerateGeometryError,
    InsufficientCorrespondencesError,
    RegistrationError,
)

MIN_PAIRS = 3
# Relative singular value below which a point set counts as collinear
RANK_TOL = 1e-10
# RMSE treated as an exact fit, relative to the target bounding box diagonal
RMSE_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """
    Index pairs between two clouds with their squared distances.

    Attributes:
        - source_indices (np.ndarray): (m,) indices into the first cloud.
        - target_indices (np.ndarray): (m,) indices into the second cloud.
        - sq_distances (np.ndarray): (m,) non-negative squared distances.
    """

    source_indices: np.ndarray
    target_indices: np.ndarray
    sq_distances: np.ndarray

    def __post_init__(self):
        src = np.asarray(self.source_indices, dtype=np.int64).reshape(-1)
        tgt = np.asarray(self.target_indices, dtype=np.int64).reshape(-1)
        sq = np.asarray(self.sq_distances, dtype=np.float64).reshape(-1)
        if not len(src) == len(tgt) == len(sq):
            raise GeometryError("Correspondence arrays differ in length.")
        if len(src) > 0 and (src.min() < 0 or tgt.min() < 0):
            raise GeometryError("Correspondence indices must be non-negative.")
        if np.any(sq < 0):
            raise GeometryError("Squared distances must be non-negative.")
        object.__setattr__(self, "source_indices", src)
        object.__setattr__(self, "target_indices", tgt)
        object.__setattr__(self, "sq_distances", sq)

    def __len__(self):
        return len(self.source_indices)

    @property
    def pairs(self):
        return list(
            zip(
                self.source_indices.tolist(),
                self.target_indices.tolist(),
                self.sq_distances.tolist(),
            )
        )


@dataclass(frozen=True)
class SicpReport:
    """
    Result of a SICP run.

    Attributes:
        - transform (SimilarityTransform): Final source-to-target transform.
        - rmse_trace (tuple): RMSE at the start of each iteration; the last
            entry is the RMSE of the final transform.
        - iterations (int): Number of iterations run.
        - converged (bool): Whether the relative RMSE change fell below the
            tolerance before the iteration cap.
    """

    transform: SimilarityTransform
    rmse_trace: tuple
    iterations: int
    converged: bool


def umeyama(source, target):
    """
    Closed-form least-squares similarity mapping source points onto target
    points, minimising sum |s R x_i + t - y_i|^2.

    The rotation comes from the SVD of the cross-covariance with the sign of
    the last singular direction corrected so that det(R) = +1.

    Args:
        - source (np.ndarray): (n, 3) points.
        - target (np.ndarray): (n, 3) points, paired by row with source.

    Returns:
        A SimilarityTransform.
    """
    source = np.asarray(source, dtype=np.float64).reshape(-1, 3)
    target = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    n = len(source)
    if n != len(target):
        raise GeometryError("Point sets differ in size: {} vs {}.".format(n, len(target)))

    mu_s = source.mean(axis=0)
    mu_t = target.mean(axis=0)
    xs = source - mu_s
    xt = target - mu_t
    var_s = np.sum(xs * xs) / n

    sing = np.linalg.svd(xs, compute_uv=False)
    if var_s <= 0 or sing[0] == 0 or sing[1] <= RANK_TOL * sing[0]:
        raise DegenerateGeometryError(
            "Point set is rank-deficient (coincident or collinear points)."
        )

    cov = xt.T @ xs / n
    u, d, vt = np.linalg.svd(cov)
    if not np.all(np.isfinite(d)):
        raise DegenerateGeometryError("Cross-covariance is not finite.")
    sign = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sign[2] = -1.0
    rotation = u @ np.diag(sign) @ vt
    scale = np.sum(d * sign) / var_s
    translation = mu_t - scale * rotation @ mu_s
    return SimilarityTransform(scale, rotation, translation)


def coarse_align_bbox(source, target):
    """
    Initial similarity from bounding boxes: the scale is the ratio of the
    box diagonals, the rotation the identity and the translation moves the
    scaled source box centre onto the target box centre.

    Outliers in either cloud distort the boxes and hence the estimate.

    Args:
        - source (PointCloud): Non-empty SfM cloud.
        - target (PointCloud): Non-empty scan.

    Returns:
        A SimilarityTransform.
    """
    box_s = compute_aabb(source)
    box_t = compute_aabb(target)
    if box_s.diagonal == 0:
        raise DegenerateGeometryError("Source bounding box has zero diagonal.")
    if box_t.diagonal == 0:
        raise DegenerateGeometryError("Target bounding box has zero diagonal.")
    scale = box_t.diagonal / box_s.diagonal
    translation = box_t.center - scale * box_s.center
    logging.info("Bounding box alignment: scale {:.6g}".format(scale))
    return SimilarityTransform(scale, np.eye(3), translation)


def coarse_align_correspondences(pairs):
    """
    Initial similarity from picked (source, target) point pairs.

    Args:
        - pairs (list): (Point3, Point3) tuples, source in the SfM frame and
            target in the scan frame.

    Returns:
        A SimilarityTransform.
    """
    if len(pairs) < MIN_PAIRS:
        raise InsufficientCorrespondencesError(
            "insufficient correspondences: need at least {} pairs, got {}.".format(
                MIN_PAIRS, len(pairs)
            )
        )
    source = np.array([tuple(p[0]) for p in pairs], dtype=np.float64)
    target = np.array([tuple(p[1]) for p in pairs], dtype=np.float64)
    transform = umeyama(source, target)
    logging.info(
        "Correspondence alignment from {} pairs: scale {:.6g}".format(
            len(pairs), transform.scale
        )
    )
    return transform


def nearest_correspondences(a, b, tree=None):
    """
    Pairs every point of a with its exact nearest neighbour in b.

    Args:
        - a (PointCloud or np.ndarray): Query points.
        - b (PointCloud or np.ndarray): Non-empty reference points.
        - tree (cKDTree, optional): Prebuilt tree over b.

    Returns:
        A CorrespondenceSet.
    """
    a_pts = getattr(a, "points", a)
    b_pts = getattr(b, "points", b)
    if len(b_pts) == 0:
        raise GeometryError("empty geometry")
    if tree is None:
        tree = cKDTree(b_pts)
    dist, idx = tree.query(a_pts, k=1)
    return CorrespondenceSet(np.arange(len(a_pts)), idx, dist * dist)


def rmse(a, b, corr):
    """
    Root mean square distance over a set of correspondences.

    Args:
        - a (PointCloud): Cloud indexed by corr.source_indices.
        - b (PointCloud): Cloud indexed by corr.target_indices.
        - corr (CorrespondenceSet): Non-empty pairs.

    Returns:
        float
    """
    if len(corr) == 0:
        raise GeometryError("Cannot compute RMSE of an empty correspondence set.")
    diff = a.points[corr.source_indices] - b.points[corr.target_indices]
    return float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))


def _reject(sq_distances, reject_sigma):
    dist = np.sqrt(sq_distances)
    cutoff = np.median(dist) + reject_sigma * np.std(dist)
    return dist <= cutoff


def sicp_register(source, target, init, cfg=None):
    """
    Scale Iterative Closest Point.

    Each iteration pairs every transformed source point with its nearest
    target point (forward) and every target point with its nearest
    transformed source point (backward), then solves one closed-form
    similarity over the union of both pair sets. Iteration stops when the
    relative change in RMSE drops below the tolerance, when the RMSE
    reaches zero, or at the iteration cap.

    Args:
        - source (PointCloud): SfM cloud, the moving set.
        - target (PointCloud): Scan, the fixed set.
        - init (SimilarityTransform): Starting transform.
        - cfg (RunConfig, optional): Supplies sicp_tolerance,
            sicp_max_iterations and reject_sigma.

    Returns:
        A SicpReport.
    """
    if cfg is None:
        cfg = RunConfig()
    if len(source) == 0 or len(target) == 0:
        raise GeometryError("empty geometry")

    src = source.points
    tgt = target.points
    tree_t = cKDTree(tgt)
    floor = RMSE_FLOOR * max(compute_aabb(target).diagonal, 1.0)

    transform = init
    trace = []
    converged = False
    iteration = 0
    for iteration in range(1, cfg.sicp_max_iterations + 1):
        moved = transform.apply_points(src)
        forward = nearest_correspondences(moved, tgt, tree_t)
        backward = nearest_correspondences(tgt, moved)

        # Both directions expressed as (source index, target index)
        src_idx = np.concatenate([forward.source_indices, backward.target_indices])
        tgt_idx = np.concatenate([forward.target_indices, backward.source_indices])
        sq = np.concatenate([forward.sq_distances, backward.sq_distances])
        if cfg.reject_sigma is not None:
            keep = _reject(sq, cfg.reject_sigma)
            src_idx, tgt_idx, sq = src_idx[keep], tgt_idx[keep], sq[keep]

        error = float(np.sqrt(np.mean(sq)))
        trace.append(error)
        logging.debug(
            "SICP iteration {}: RMSE {:.9g} over {} pairs".format(iteration, error, len(sq))
        )

        if error <= floor:
            converged = True
            break
        if len(trace) > 1 and abs(trace[-2] - error) < cfg.sicp_tolerance * trace[-2]:
            converged = True
            break
        if iteration == cfg.sicp_max_iterations:
            break

        try:
            update = umeyama(src[src_idx], tgt[tgt_idx])
        except (DegenerateGeometryError, GeometryError) as ex:
            raise RegistrationError(
                "SICP update failed at iteration {}: {}".format(iteration, ex),
                last_transform=transform,
                trace=trace,
            ) from None
        transform = update

    if converged:
        logging.info(
            "SICP converged after {} iterations, RMSE {:.6g}".format(iteration, trace[-1])
        )
    else:
        logging.warning(
            "SICP stopped at the iteration cap ({}), RMSE {:.6g}".format(
                iteration, trace[-1]
            )
        )
    return SicpReport(transform, tuple(trace), iteration, converged)
