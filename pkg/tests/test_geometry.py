"""
    test_geometry.py
    ~~~~~~~~~~~~~~~~

    Unit tests for the geometric types and transform algebra in
    scancolor.geometry
"""

import unittest

import numpy as np
from hypothesis import given, settings, strategies as st

from scancolor.utils import GeometryError
from scancolor.geometry import (
    Aabb,
    Point3,
    PointCloud,
    SimilarityTransform,
    TriangleMesh,
    apply_transform,
    apply_transform_geometry,
    compose,
    compute_aabb,
    estimate_normals,
    invert,
    rotation_about_axis,
    rotation_angle,
)
from utils import quad_mesh, random_cloud

axes = st.tuples(
    st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)
).filter(lambda a: np.linalg.norm(a) > 0.1)

transforms = st.builds(
    lambda s, axis, angle, t: SimilarityTransform(
        s, rotation_about_axis(axis, angle), t
    ),
    st.floats(0.25, 4.0),
    axes,
    st.floats(-np.pi, np.pi),
    st.tuples(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10)),
)


class TestPointCloud(unittest.TestCase):
    def test_immutable(self):
        cloud = PointCloud(np.zeros((3, 3)))
        with self.assertRaises(ValueError):
            cloud.points[0, 0] = 1.0

    def test_copies_input(self):
        points = np.zeros((2, 3))
        cloud = PointCloud(points)
        points[0, 0] = 5.0
        self.assertEqual(cloud.points[0, 0], 0.0)

    def test_nonfinite(self):
        with self.assertRaises(GeometryError):
            PointCloud([[0.0, np.nan, 0.0]])

    def test_normal_count(self):
        with self.assertRaises(GeometryError):
            PointCloud(np.zeros((2, 3)), normals=[[0.0, 0.0, 1.0]])

    def test_normal_length(self):
        with self.assertRaises(GeometryError):
            PointCloud(np.zeros((1, 3)), normals=[[0.0, 0.0, 2.0]])

    def test_color_range(self):
        with self.assertRaises(GeometryError):
            PointCloud(np.zeros((1, 3)), colors=[[0.0, 1.5, 0.0]])

    def test_validity_needs_normals(self):
        with self.assertRaises(GeometryError):
            PointCloud(np.zeros((1, 3)), normal_valid=[True])

    def test_subset(self):
        rng = np.random.default_rng(1)
        cloud = random_cloud(rng, 10, colors=True)
        sub = cloud.subset([4, 2])
        self.assertEqual(len(sub), 2)
        np.testing.assert_array_equal(sub.points[0], cloud.points[4])
        np.testing.assert_array_equal(sub.colors[1], cloud.colors[2])
        self.assertIsNone(sub.normals)


class TestTriangleMesh(unittest.TestCase):
    def test_index_range(self):
        with self.assertRaises(GeometryError):
            TriangleMesh(PointCloud(np.zeros((3, 3))), [[0, 1, 3]])

    def test_repeated_index(self):
        with self.assertRaises(GeometryError):
            TriangleMesh(PointCloud(np.eye(3)), [[0, 1, 1]])

    def test_face_normals(self):
        mesh = quad_mesh()
        np.testing.assert_allclose(mesh.face_normals(), [[0, 0, 1], [0, 0, 1]])


class TestSimilarityTransform(unittest.TestCase):
    def test_rejects_nonpositive_scale(self):
        with self.assertRaises(GeometryError):
            SimilarityTransform(0.0, np.eye(3), np.zeros(3))
        with self.assertRaises(GeometryError):
            SimilarityTransform(-1.0, np.eye(3), np.zeros(3))

    def test_rejects_reflection(self):
        with self.assertRaises(GeometryError):
            SimilarityTransform(1.0, np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_rejects_nonorthonormal(self):
        with self.assertRaises(GeometryError):
            SimilarityTransform(1.0, 2 * np.eye(3), np.zeros(3))

    def test_matrix(self):
        tf = SimilarityTransform(2.0, rotation_about_axis((0, 0, 1), np.pi / 2), (1, 2, 3))
        point = np.array([1.0, 0.0, 0.0])
        homog = tf.matrix() @ np.append(point, 1.0)
        np.testing.assert_allclose(homog[:3], tf.apply_points(point)[0])
        np.testing.assert_allclose(homog[:3], [1.0, 4.0, 3.0], atol=1e-12)

    def test_rotation_angle(self):
        self.assertAlmostEqual(rotation_angle(rotation_about_axis((1, 1, 0), 0.3)), 0.3)
        self.assertAlmostEqual(rotation_angle(np.eye(3)), 0.0)


class TestTransformAlgebra(unittest.TestCase):
    @settings(max_examples=50, deadline=None)
    @given(transforms, transforms)
    def test_compose_matches_sequential(self, a, b):
        points = np.random.default_rng(0).uniform(-1, 1, size=(5, 3))
        expected = a.apply_points(b.apply_points(points))
        np.testing.assert_allclose(compose(a, b).apply_points(points), expected, atol=1e-8)

    @settings(max_examples=50, deadline=None)
    @given(transforms)
    def test_inverse(self, tf):
        ident = compose(tf, invert(tf))
        self.assertAlmostEqual(ident.scale, 1.0)
        np.testing.assert_allclose(ident.rotation, np.eye(3), atol=1e-9)
        np.testing.assert_allclose(ident.translation, np.zeros(3), atol=1e-8)

    @settings(max_examples=30, deadline=None)
    @given(transforms)
    def test_identity_neutral(self, tf):
        both = compose(SimilarityTransform.identity(), tf)
        self.assertAlmostEqual(both.scale, tf.scale)
        np.testing.assert_allclose(both.translation, tf.translation, atol=1e-12)


class TestApplyTransform(unittest.TestCase):
    def test_empty(self):
        with self.assertRaises(GeometryError):
            apply_transform(SimilarityTransform.identity(), PointCloud(np.zeros((0, 3))))

    def test_normals_rotated_not_scaled(self):
        rot = rotation_about_axis((1, 0, 0), np.pi / 2)
        cloud = PointCloud([[0.0, 0.0, 1.0]], normals=[[0.0, 0.0, 1.0]], colors=[[0.2, 0.4, 0.6]])
        out = apply_transform(SimilarityTransform(3.0, rot, (1, 0, 0)), cloud)
        np.testing.assert_allclose(out.points, [[1.0, -3.0, 0.0]], atol=1e-12)
        np.testing.assert_allclose(out.normals, [[0.0, -1.0, 0.0]], atol=1e-12)
        np.testing.assert_array_equal(out.colors, cloud.colors)

    def test_mesh_keeps_faces(self):
        mesh = quad_mesh()
        out = apply_transform_geometry(SimilarityTransform(2.0, np.eye(3), (0, 0, 1)), mesh)
        self.assertIsInstance(out, TriangleMesh)
        np.testing.assert_array_equal(out.faces, mesh.faces)
        np.testing.assert_allclose(out.points[:, 2], 1.0)


class TestAabb(unittest.TestCase):
    def test_compute(self):
        cloud = PointCloud([[0, 0, 0], [1, 2, 3], [-1, 0.5, 1]])
        box = compute_aabb(cloud)
        self.assertEqual(box.min, Point3(-1.0, 0.0, 0.0))
        self.assertEqual(box.max, Point3(1.0, 2.0, 3.0))
        self.assertAlmostEqual(box.diagonal, np.sqrt(4 + 4 + 9))
        np.testing.assert_allclose(box.center, [0.0, 1.0, 1.5])
        self.assertEqual(box.corners().shape, (8, 3))

    def test_empty(self):
        with self.assertRaises(GeometryError):
            compute_aabb(PointCloud(np.zeros((0, 3))))

    def test_order(self):
        with self.assertRaises(GeometryError):
            Aabb(Point3(1, 0, 0), Point3(0, 0, 0))


class TestEstimateNormals(unittest.TestCase):
    def test_plane(self):
        rng = np.random.default_rng(3)
        points = np.column_stack([rng.uniform(-1, 1, size=(200, 2)), np.zeros(200)])
        out = estimate_normals(PointCloud(points), k=8, viewpoint=(0, 0, 5))
        self.assertTrue(np.all(out.normal_valid))
        np.testing.assert_allclose(out.normals[:, 2], 1.0, atol=1e-9)

    def test_away(self):
        rng = np.random.default_rng(3)
        points = np.column_stack([rng.uniform(-1, 1, size=(50, 2)), np.zeros(50)])
        out = estimate_normals(PointCloud(points), viewpoint=(0, 0, 5), away=True)
        np.testing.assert_allclose(out.normals[:, 2], -1.0, atol=1e-9)

    def test_collinear_flagged(self):
        points = np.column_stack([np.linspace(0, 1, 20), np.zeros(20), np.zeros(20)])
        out = estimate_normals(PointCloud(points), k=5)
        self.assertFalse(np.any(out.normal_valid))

    def test_too_few(self):
        with self.assertRaises(GeometryError):
            estimate_normals(PointCloud(np.zeros((2, 3))))
        with self.assertRaises(GeometryError):
            estimate_normals(PointCloud(np.eye(3)), k=2)
