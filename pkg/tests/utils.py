"""
    tests/utils.py
    ~~~~~~~~~~~~~~

    Utility functions for unit tests.
"""
import numpy as np
from scipy import ndimage

from scancolor.geometry import PointCloud, TriangleMesh, rotation_about_axis
from scancolor.projection import Camera
from scancolor.synthetic import look_at


def random_cloud(rng, n, colors=False):
    """
    A cloud of n points uniform in the unit cube.
    """
    points = rng.uniform(-1.0, 1.0, size=(n, 3))
    return PointCloud(points, colors=rng.uniform(0, 1, size=(n, 3)) if colors else None)


def random_rotation(rng, max_angle=np.pi):
    return rotation_about_axis(rng.normal(size=3), rng.uniform(0.0, max_angle))


def quad_mesh(z=0.0, half=1.0):
    """
    A square of two triangles in the plane z = const.
    """
    points = np.array(
        [[-half, -half, z], [half, -half, z], [half, half, z], [-half, half, z]]
    )
    return TriangleMesh(PointCloud(points), [[0, 1, 2], [0, 2, 3]])


def looking_camera(eye, target=(0.0, 0.0, 0.0), focal=50.0, width=64, height=48, **kwargs):
    """
    An undistorted camera at eye looking at target.
    """
    rotation, translation = look_at(eye, target)
    return Camera(focal, 0.0, 0.0, rotation, translation, width, height, **kwargs)


def overhead_camera(height_above=4.0, focal=50.0, width=64, height=48):
    """
    A camera on the +z axis looking down at the origin.
    """
    return looking_camera((0.0, 0.0, height_above), focal=focal, width=width, height=height)


def noise_image(rng, height, width, smooth=2):
    """
    A random image with some spatial correlation, so blocks have texture.
    """
    raw = rng.uniform(0, 1, size=(height, width, 3))
    blurred = ndimage.uniform_filter(raw, size=(smooth, smooth, 1))
    lo, hi = blurred.min(), blurred.max()
    return (blurred - lo) / (hi - lo)
