"""
    test_registration.py
    ~~~~~~~~~~~~~~~~~~~~

    Unit tests for coarse alignment and SICP in scancolor.registration
"""

import time
import unittest
from unittest.mock import patch

import numpy as np

from scancolor.config import RunConfig
from scancolor.geometry import (
    Point3,
    PointCloud,
    SimilarityTransform,
    apply_transform,
    compute_aabb,
    rotation_about_axis,
    rotation_angle,
)
from scancolor.registration import (
    CorrespondenceSet,
    coarse_align_bbox,
    coarse_align_correspondences,
    nearest_correspondences,
    rmse,
    sicp_register,
    umeyama,
    _reject,
)
from scancolor.utils import (
    DegenerateGeometryError,
    GeometryError,
    InsufficientCorrespondencesError,
    RegistrationError,
)
from utils import random_cloud, random_rotation


def box_cloud(rng, n):
    """
    Points in an elongated box, so the cloud has no rotational symmetry
    close to the identity.
    """
    return PointCloud(rng.uniform(-1, 1, size=(n, 3)) * [1.0, 0.6, 0.3])


def assert_transform_close(test, found, expected, diag, tol=1e-4):
    test.assertLess(abs(found.scale - expected.scale) / expected.scale, tol)
    test.assertLess(rotation_angle(found.rotation.T @ expected.rotation), tol)
    test.assertLess(np.linalg.norm(found.translation - expected.translation), tol * diag)


class TestUmeyama(unittest.TestCase):
    def test_exact_recovery(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            truth = SimilarityTransform(
                np.exp(rng.uniform(np.log(0.1), np.log(10))),
                random_rotation(rng),
                rng.uniform(-5, 5, size=3),
            )
            source = rng.uniform(-1, 1, size=(30, 3))
            found = umeyama(source, truth.apply_points(source))
            self.assertAlmostEqual(found.scale / truth.scale, 1.0, places=9)
            np.testing.assert_allclose(found.rotation, truth.rotation, atol=1e-9)
            np.testing.assert_allclose(found.translation, truth.translation, atol=1e-8)

    def test_mirrored_target_gives_proper_rotation(self):
        rng = np.random.default_rng(12)
        source = rng.uniform(-1, 1, size=(20, 3))
        found = umeyama(source, source * [1.0, 1.0, -1.0])
        self.assertAlmostEqual(np.linalg.det(found.rotation), 1.0)

    def test_collinear(self):
        line = np.outer(np.linspace(0, 1, 10), [1.0, 2.0, 3.0])
        with self.assertRaises(DegenerateGeometryError):
            umeyama(line, line)

    def test_coincident(self):
        with self.assertRaises(DegenerateGeometryError):
            umeyama(np.ones((5, 3)), np.zeros((5, 3)))

    def test_size_mismatch(self):
        with self.assertRaises(GeometryError):
            umeyama(np.eye(3), np.eye(4)[:, :3])


class TestCoarseAlignment(unittest.TestCase):
    def test_bbox(self):
        rng = np.random.default_rng(3)
        source = random_cloud(rng, 200)
        truth = SimilarityTransform(2.5, np.eye(3), (1.0, -2.0, 0.5))
        found = coarse_align_bbox(source, apply_transform(truth, source))
        self.assertAlmostEqual(found.scale, 2.5)
        np.testing.assert_allclose(found.translation, truth.translation, atol=1e-12)
        np.testing.assert_array_equal(found.rotation, np.eye(3))

    def test_bbox_degenerate(self):
        point = PointCloud([[1.0, 1.0, 1.0]])
        cloud = random_cloud(np.random.default_rng(0), 10)
        with self.assertRaises(DegenerateGeometryError):
            coarse_align_bbox(point, cloud)
        with self.assertRaises(DegenerateGeometryError):
            coarse_align_bbox(cloud, point)

    def test_correspondences(self):
        truth = SimilarityTransform(0.5, rotation_about_axis((0, 1, 1), 1.0), (3, 2, 1))
        source = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1.0]])
        target = truth.apply_points(source)
        pairs = [(Point3(*s), Point3(*t)) for s, t in zip(source, target)]
        found = coarse_align_correspondences(pairs)
        np.testing.assert_allclose(found.matrix(), truth.matrix(), atol=1e-9)

    def test_too_few_pairs(self):
        pairs = [(Point3(0, 0, 0), Point3(1, 1, 1)), (Point3(1, 0, 0), Point3(2, 1, 1))]
        with self.assertRaisesRegex(
            InsufficientCorrespondencesError, "insufficient correspondences"
        ):
            coarse_align_correspondences(pairs)


class TestCorrespondences(unittest.TestCase):
    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(4)
        a = random_cloud(rng, 500)
        b = random_cloud(rng, 400)
        corr = nearest_correspondences(a, b)
        sq = np.sum((a.points[:, np.newaxis, :] - b.points[np.newaxis, :, :]) ** 2, axis=2)
        np.testing.assert_array_equal(corr.target_indices, np.argmin(sq, axis=1))
        np.testing.assert_allclose(corr.sq_distances, np.min(sq, axis=1))
        np.testing.assert_array_equal(corr.source_indices, np.arange(500))

    def test_self(self):
        cloud = random_cloud(np.random.default_rng(5), 50)
        corr = nearest_correspondences(cloud, cloud)
        np.testing.assert_array_equal(corr.target_indices, np.arange(50))
        self.assertEqual(rmse(cloud, cloud, corr), 0.0)

    def test_empty_reference(self):
        with self.assertRaises(GeometryError):
            nearest_correspondences(np.zeros((2, 3)), np.zeros((0, 3)))

    def test_rmse_single_pair(self):
        a = PointCloud([[0.0, 0.0, 0.0]])
        b = PointCloud([[3.0, 4.0, 0.0]])
        self.assertAlmostEqual(rmse(a, b, CorrespondenceSet([0], [0], [25.0])), 5.0)

    def test_set_validation(self):
        with self.assertRaises(GeometryError):
            CorrespondenceSet([0, 1], [0], [0.0])
        with self.assertRaises(GeometryError):
            CorrespondenceSet([0], [0], [-1.0])
        with self.assertRaises(GeometryError):
            rmse(PointCloud(np.eye(3)), PointCloud(np.eye(3)), CorrespondenceSet([], [], []))

    def test_reject(self):
        keep = _reject(np.array([1.0, 1.0, 1.0, 1.0, 1e4]), 1.0)
        np.testing.assert_array_equal(keep, [True, True, True, True, False])


class TestSicp(unittest.TestCase):
    def test_recovers_similarity(self):
        rng = np.random.default_rng(21)
        for trial in range(20):
            source = box_cloud(rng, 5000)
            truth = SimilarityTransform(
                np.exp(rng.uniform(np.log(0.1), np.log(10))),
                random_rotation(rng, max_angle=0.2),
                rng.uniform(-3, 3, size=3),
            )
            target = apply_transform(truth, source)
            started = time.perf_counter()
            init = coarse_align_bbox(source, target)
            report = sicp_register(source, target, init)
            elapsed = time.perf_counter() - started

            msg = "trial {}".format(trial)
            self.assertTrue(report.converged, msg)
            self.assertLess(elapsed, 10.0, msg)
            assert_transform_close(
                self, report.transform, truth, compute_aabb(target).diagonal
            )
            trace = np.array(report.rmse_trace)
            self.assertTrue(np.all(np.diff(trace) <= 1e-12 * trace[0]), msg)
            self.assertEqual(len(trace), report.iterations)

    def test_identical_clouds(self):
        cloud = box_cloud(np.random.default_rng(1), 100)
        report = sicp_register(cloud, cloud, SimilarityTransform.identity())
        self.assertTrue(report.converged)
        self.assertEqual(report.iterations, 1)
        self.assertEqual(report.rmse_trace, (0.0,))

    def test_iteration_cap(self):
        rng = np.random.default_rng(2)
        source = box_cloud(rng, 200)
        target = apply_transform(SimilarityTransform(2.0, np.eye(3), (1, 0, 0)), source)
        init = SimilarityTransform.identity()
        report = sicp_register(source, target, init, RunConfig(sicp_max_iterations=1))
        self.assertFalse(report.converged)
        self.assertEqual(report.iterations, 1)
        self.assertIs(report.transform, init)

    def test_update_failure(self):
        rng = np.random.default_rng(3)
        source = box_cloud(rng, 50)
        target = apply_transform(SimilarityTransform(2.0, np.eye(3), (0, 0, 0)), source)
        init = SimilarityTransform.identity()
        with patch(
            "scancolor.registration.umeyama",
            side_effect=DegenerateGeometryError("rank-deficient"),
        ):
            with self.assertRaises(RegistrationError) as cm:
                sicp_register(source, target, init)
        self.assertIs(cm.exception.last_transform, init)
        self.assertEqual(len(cm.exception.trace), 1)

    def test_empty(self):
        with self.assertRaises(GeometryError):
            sicp_register(
                PointCloud(np.zeros((0, 3))),
                random_cloud(np.random.default_rng(0), 5),
                SimilarityTransform.identity(),
            )
