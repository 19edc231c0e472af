"""
    test_colorize.py
    ~~~~~~~~~~~~~~~~

    Unit tests for image selection, block matching and color blending in
    scancolor.colorize
"""

from dataclasses import replace
import unittest

import numpy as np
import pandas as pd

from scancolor.colorize import (
    DISPLACEMENT_COLUMNS,
    Displacement,
    DisplacementRecord,
    ImageView,
    PointProjectionSet,
    ProjectionEntry,
    blend_point_color,
    block_contrast,
    colorize_cloud,
    displacements_to_dataframe,
    extract_patch,
    local_displacement,
    records_from_dataframe,
    select_best_images,
)
from scancolor.config import RunConfig
from scancolor.geometry import PointCloud
from scancolor.imageproc import Image
from scancolor.projection import QualityMask, quality_masks
from scancolor.synthetic import (
    SceneSpec,
    evaluate_run,
    generate_scene,
    make_mesh,
    perturb_scene,
)
from scancolor.utils import ColorizationError, GeometryError
from utils import looking_camera, noise_image, overhead_camera

RED = (0.8, 0.2, 0.1)
BLUE = (0.1, 0.3, 0.9)


def constant_view(image_id, cam, rgb, masks=None):
    pixels = np.tile(np.asarray(rgb, dtype=np.float64), (cam.height, cam.width, 1))
    return ImageView(image_id, cam, Image(pixels), masks)


def entry(image_id, weight, visible=True, u=10.0, v=10.0):
    return ProjectionEntry(image_id, u, v, weight, visible)


class TestSelectBestImages(unittest.TestCase):
    def test_order_and_ties(self):
        proj = PointProjectionSet(
            7,
            [entry(0, 0.5), entry(1, 0.9), entry(2, 0.5), entry(3, 0.0), entry(4, 0.0, False)],
        )
        self.assertEqual(select_best_images(proj, 3), [1, 0, 2])
        self.assertEqual(select_best_images(proj, 1), [1])
        self.assertEqual(select_best_images(proj, 10), [1, 0, 2])

    def test_unseen(self):
        proj = PointProjectionSet(0, [entry(0, 0.0, False), entry(1, 0.0)])
        self.assertEqual(select_best_images(proj, 3), [])

    def test_bad_k(self):
        with self.assertRaises(ValueError):
            select_best_images(PointProjectionSet(0, [entry(0, 1.0)]), 0)

    def test_projection_set_validation(self):
        with self.assertRaises(ValueError):
            PointProjectionSet(0, [entry(0, 1.0), entry(0, 0.5)])
        with self.assertRaises(ValueError):
            PointProjectionSet(0, [entry(0, 0.5, visible=False)])


class TestLocalDisplacement(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(13)
        self.cam = looking_camera((0.0, 0.0, 4.0), width=80, height=80)
        self.pixels = 0.1 + 0.8 * noise_image(rng, 80, 80)
        self.ref = ImageView(0, self.cam, Image(self.pixels), None)

    def shifted(self, dx, dy, offset=0.0):
        # Content moves by (dx, dy): new[y, x] = old[y - dy, x - dx]
        pixels = np.roll(self.pixels, shift=(dy, dx), axis=(0, 1)) + offset
        return ImageView(1, self.cam, Image(pixels), None)

    def test_recovers_shift(self):
        target = self.shifted(3, -2)
        shift = local_displacement(self.ref, (40.0, 40.0), target, (40.0, 40.0), 7, 5)
        self.assertTrue(shift.matched)
        self.assertEqual((shift.dx, shift.dy), (3, -2))
        self.assertAlmostEqual(shift.error, 0.0)
        self.assertEqual(shift.evaluations, 11 * 11)

    def test_antisymmetric(self):
        target = self.shifted(3, -2)
        forward = local_displacement(self.ref, (40.0, 40.0), target, (40.0, 40.0), 7, 5)
        backward = local_displacement(target, (40.0, 40.0), self.ref, (40.0, 40.0), 7, 5)
        self.assertEqual((backward.dx, backward.dy), (-forward.dx, -forward.dy))

    def test_brightness_offset(self):
        target = self.shifted(-4, 1, offset=0.05)
        shift = local_displacement(self.ref, (40.0, 40.0), target, (40.0, 40.0), 7, 6)
        self.assertEqual((shift.dx, shift.dy), (-4, 1))

    def test_subpixel_projection(self):
        target = self.shifted(2, 2)
        shift = local_displacement(self.ref, (40.0, 40.0), target, (39.9, 40.1), 7, 5)
        # The true offset is (2.1, 1.9), the nearest integer candidate wins
        self.assertEqual((shift.dx, shift.dy), (2, 2))

    def test_outside_image(self):
        shift = local_displacement(self.ref, (40.0, 40.0), self.shifted(0, 0), (-100.0, -100.0), 7, 5)
        self.assertFalse(shift.matched)
        self.assertEqual(shift.evaluations, 0)

    def test_partially_outside(self):
        shift = local_displacement(self.ref, (40.0, 40.0), self.shifted(0, 0), (1.0, 40.0), 7, 5)
        self.assertEqual(shift.evaluations, 7 * 11)

    def test_flat_blocks_prefer_zero(self):
        flat = constant_view(1, self.cam, RED)
        shift = local_displacement(constant_view(0, self.cam, RED), (40.0, 40.0), flat, (40.0, 40.0), 7, 5)
        self.assertEqual((shift.dx, shift.dy), (0, 0))

    def test_contrast(self):
        self.assertAlmostEqual(block_contrast(constant_view(0, self.cam, RED), (40.0, 40.0), 7), 0.0)
        self.assertGreater(block_contrast(self.ref, (40.0, 40.0), 7), 1.0)


class TestBlend(unittest.TestCase):
    def setUp(self):
        cam = overhead_camera()
        self.views = {0: constant_view(0, cam, RED), 1: constant_view(1, cam, BLUE)}
        self.proj = PointProjectionSet(3, [entry(0, 0.75), entry(1, 0.25)])

    def test_weighted_mean(self):
        out = blend_point_color(3, [0, 1], {}, self.views, self.proj)
        self.assertTrue(out.colored)
        self.assertEqual(out.n_images, 2)
        np.testing.assert_allclose(out.rgb, 0.75 * np.array(RED) + 0.25 * np.array(BLUE))

    def test_unmatched_left_out(self):
        out = blend_point_color(3, [0, 1], {1: Displacement(1)}, self.views, self.proj)
        self.assertEqual(out.n_images, 1)
        np.testing.assert_allclose(out.rgb, RED)

    def test_no_weight(self):
        proj = PointProjectionSet(3, [entry(0, 0.0), entry(1, 0.0)])
        out = blend_point_color(3, [0, 1], {}, self.views, proj)
        self.assertFalse(out.colored)
        self.assertIsNone(out.rgb)


class TestExtractPatch(unittest.TestCase):
    def test_nearest(self):
        cloud = PointCloud(np.column_stack([np.arange(10.0), np.zeros(10), np.zeros(10)]))
        np.testing.assert_array_equal(extract_patch(cloud, (6.2, 0, 0), 3), [5, 6, 7])
        np.testing.assert_array_equal(extract_patch(cloud, (0, 0, 0), 1), [0])
        self.assertEqual(len(extract_patch(cloud, (0, 0, 0), 50)), 10)

    def test_empty_patch(self):
        cloud = PointCloud(np.zeros((3, 3)))
        with self.assertRaises(GeometryError):
            extract_patch(cloud, (0, 0, 0), 0)


class TestColorizeCloud(unittest.TestCase):
    def setUp(self):
        # 10 x 10 grid over [-1, 1]^2 seen from above by two cameras in the
        # same pose, with constant-colored photographs
        self.mesh = make_mesh("plane", 100)
        cam = overhead_camera()
        masks = quality_masks(self.mesh, cam)
        self.views = [constant_view(0, cam, RED, masks), constant_view(1, cam, BLUE, masks)]
        points = self.mesh.points
        self.edge = (np.abs(points[:, 0]) == 1.0) | (np.abs(points[:, 1]) == 1.0)

    def test_blends_and_flags_silhouette(self):
        cloud, report, records = colorize_cloud(self.mesh, self.views)
        inside = ~self.edge
        np.testing.assert_allclose(
            cloud.colors[inside], np.tile(0.5 * (np.array(RED) + np.array(BLUE)), (64, 1))
        )
        # Silhouette vertices have zero border weight in every image
        self.assertEqual(report.uncolored, np.flatnonzero(self.edge).tolist())
        np.testing.assert_allclose(cloud.colors[self.edge], 0.5)

        self.assertEqual(report.n_colored, 64)
        self.assertEqual(report.n_searches, 64)
        self.assertEqual(report.n_no_match, 0)
        self.assertEqual(report.displacement_histogram, {(0, 0): 64})
        self.assertEqual(len(records), 64)
        self.assertTrue(all(rec.reference_id == 0 for rec in records))

        summary = report.to_dict()
        self.assertNotIn("timings", summary)
        self.assertEqual(summary["n_uncolored"], 36)
        self.assertEqual(summary["displacement_histogram"], {"0,0": 64})
        self.assertGreater(summary["max_block_evaluations"], 0)

    def test_single_image_no_searches(self):
        _, report, records = colorize_cloud(self.mesh, self.views, RunConfig(best_k=1))
        self.assertEqual(report.n_searches, 0)
        self.assertEqual(records, [])
        self.assertEqual(report.to_dict()["total_block_evaluations"], 0)

    def test_without_correction(self):
        cloud, report, records = colorize_cloud(
            self.mesh, self.views, RunConfig(local_correction=False)
        )
        self.assertEqual(report.n_searches, 0)
        self.assertFalse(report.local_correction)
        self.assertEqual(report.n_colored, 64)

    def test_patch(self):
        patch = extract_patch(self.mesh, (0.0, 0.0, 0.0), 4)
        cloud, report, _ = colorize_cloud(self.mesh, self.views, patch=patch)
        self.assertEqual(report.n_processed, 4)
        self.assertEqual(report.n_colored, 4)
        outside = np.setdiff1d(np.arange(100), patch)
        np.testing.assert_allclose(cloud.colors[outside], 0.5)

    def test_nothing_visible(self):
        cam = looking_camera((0.0, 0.0, 4.0), target=(0.0, 0.0, 8.0))
        masks = quality_masks(self.mesh, cam)
        with self.assertRaises(ColorizationError):
            colorize_cloud(self.mesh, [constant_view(0, cam, RED, masks)])

    def test_view_size_check(self):
        cam = overhead_camera()
        with self.assertRaises(GeometryError):
            ImageView(0, cam, Image(np.zeros((10, 10, 3))), None)


class TestDisplacementTable(unittest.TestCase):
    def setUp(self):
        self.records = [
            DisplacementRecord(4, 0, [Displacement(1, 2, -1, 0.5, 9), Displacement(2)], 3.25),
            DisplacementRecord(9, 2, [Displacement(0, 0, 0, 0.0, 9)], 0.5),
        ]

    def test_columns(self):
        df = displacements_to_dataframe(self.records)
        self.assertEqual(list(df.columns), DISPLACEMENT_COLUMNS)
        self.assertEqual(len(df), 3)
        self.assertEqual(str(df["dx"].dtype), "Int64")
        self.assertTrue(pd.isna(df["dx"].iloc[1]))
        self.assertEqual(df["point"].tolist(), [4, 4, 9])

    def test_rebuild(self):
        rebuilt = records_from_dataframe(displacements_to_dataframe(self.records))
        self.assertEqual([r.point_index for r in rebuilt], [4, 9])
        self.assertEqual([r.reference_id for r in rebuilt], [0, 2])
        self.assertEqual(rebuilt[0].contrast, 3.25)
        first, second = rebuilt[0].targets
        self.assertEqual((first.image_id, first.dx, first.dy, first.error), (1, 2, -1, 0.5))
        self.assertFalse(second.matched)

    def test_missing_columns(self):
        with self.assertRaises(ValueError):
            records_from_dataframe(pd.DataFrame({"point": [1]}))


class TestSceneRun(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        spec = SceneSpec(kind="vase", n_vertices=400, n_images=3, width=64, height=48)
        cls.scene = generate_scene(11, spec)
        cls.views = [
            ImageView(i, cam, image, quality_masks(cls.scene.mesh, cam))
            for i, (cam, image) in enumerate(zip(cls.scene.cameras, cls.scene.images))
        ]

    def test_work_bound(self):
        cfg = RunConfig()
        _, report, records = colorize_cloud(self.scene.mesh, self.views, cfg)
        per_search = (2 * cfg.search_radius + 1) ** 2
        evaluations = np.asarray(report.block_evaluations)
        self.assertTrue(np.all(evaluations <= (cfg.best_k - 1) * per_search))

        searched = {rec.point_index for rec in records}
        for rec in records:
            self.assertLessEqual(len(rec.targets), cfg.best_k - 1)
            spent = sum(shift.evaluations for shift in rec.targets)
            self.assertEqual(evaluations[rec.point_index], spent)
        others = [i for i in range(len(evaluations)) if i not in searched]
        np.testing.assert_array_equal(evaluations[others], 0)
        self.assertEqual(report.n_searches, sum(len(rec.targets) for rec in records))

    def test_deterministic(self):
        first, report_a, records_a = colorize_cloud(self.scene.mesh, self.views)
        second, report_b, records_b = colorize_cloud(self.scene.mesh, self.views)
        np.testing.assert_array_equal(first.colors, second.colors)
        self.assertEqual(report_a.to_dict(), report_b.to_dict())
        self.assertEqual(records_a, records_b)

    def test_convex_blend(self):
        colored, report, _ = colorize_cloud(
            self.scene.mesh, self.views, RunConfig(local_correction=False)
        )
        done = np.setdiff1d(np.arange(len(colored)), report.uncolored)
        self.assertGreater(len(done), 0)
        self.assertTrue(np.all(colored.colors[done] >= 0.0))
        self.assertTrue(np.all(colored.colors[done] <= 1.0))


class TestShiftedCamera(unittest.TestCase):
    """
    Three nearby cameras over a textured plane. The middle camera's
    principal point is shifted and its weights halved, so it is matched as
    a target against an unshifted reference.
    """

    SHIFTS = [(4, -2), (-4, 2), (10, 0), (0, 10)]

    @classmethod
    def setUpClass(cls):
        spec = SceneSpec(kind="plane", n_vertices=900, n_images=3, arc=8.0)
        scene = generate_scene(21, spec)
        cls.scores = {}
        for shift in cls.SHIFTS:
            shifted = perturb_scene(scene, "principal-shift", shift, camera_index=1)
            views = cls.views(shifted)
            cls.scores[shift] = (
                cls.score(shifted, views, RunConfig()),
                cls.score(shifted, views, RunConfig(local_correction=False)),
            )

    @staticmethod
    def views(scene):
        views = []
        for i, (cam, image) in enumerate(zip(scene.cameras, scene.images)):
            masks = quality_masks(scene.mesh, cam)
            if i == 1:
                masks = replace(masks, combined=QualityMask(masks.combined.weight * 0.5))
            views.append(ImageView(i, cam, image, masks))
        return views

    @staticmethod
    def score(scene, views, cfg):
        colored, report, records = colorize_cloud(scene.mesh, views, cfg)
        return evaluate_run(scene, colored, records=records, uncolored=report.uncolored)

    def test_displacement_recovery(self):
        for shift in self.SHIFTS:
            with self.subTest(shift=shift):
                corrected, _ = self.scores[shift]
                self.assertGreater(corrected.n_displacement_checks, 500)
                self.assertGreaterEqual(corrected.displacement_recovery, 0.95)
                self.assertTrue(corrected.check()["displacement_recovery"])

    def test_correction_lowers_error(self):
        for shift in self.SHIFTS:
            with self.subTest(shift=shift):
                corrected, uncorrected = self.scores[shift]
                self.assertIsNone(uncorrected.displacement_recovery)
                self.assertLess(corrected.color_error_mean, uncorrected.color_error_mean)
                self.assertLess(corrected.color_error_mean, 4.0 / 255)
