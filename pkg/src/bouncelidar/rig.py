"""Camera and lidar rig models.

The camera is an ideal pinhole. Camera space is +x right, +y down, +z
forward; pixel (u, v) means column u, row v, and image arrays are indexed
[v, u]. The field of view is the horizontal angle; vertical coverage
follows from the aspect ratio. Depth maps store Euclidean distance along
the pixel ray, so unprojection is position + depth * pixel_dir.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import GeometryError, _as_point


@dataclass
class CameraPose:
    position: np.ndarray
    rotation: np.ndarray        # 3x3, columns are camera axes in world space
    fov_deg: float
    n_x: int
    n_y: int

    def __post_init__(self):
        self.position = _as_point(self.position)
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        if self.rotation.shape != (3, 3):
            raise GeometryError("rotation must be 3x3")
        if np.abs(self.rotation @ self.rotation.T - np.eye(3)).max() > 1e-6:
            raise GeometryError("rotation must be orthonormal")
        if not 10.0 < self.fov_deg < 170.0:
            raise GeometryError(f"fov_deg must be in (10, 170), got {self.fov_deg}")
        if self.n_x < 1 or self.n_y < 1:
            raise GeometryError("image resolution must be positive")

    @property
    def tan_half_fov(self):
        return float(np.tan(np.radians(self.fov_deg) / 2.0))

    @property
    def aspect(self):
        return self.n_y / self.n_x

    def pixel_dirs(self):
        """Unit world-space ray directions per pixel, shape (n_y, n_x, 3)."""
        th = self.tan_half_fov
        xs = ((np.arange(self.n_x) + 0.5) / self.n_x * 2.0 - 1.0) * th
        ys = ((np.arange(self.n_y) + 0.5) / self.n_y * 2.0 - 1.0) * th * self.aspect
        gx, gy = np.meshgrid(xs, ys)
        cam = np.stack([gx, gy, np.ones_like(gx)], axis=-1)
        cam /= np.linalg.norm(cam, axis=-1, keepdims=True)
        return cam @ self.rotation.T

    def unproject(self, depth):
        """Surface points from a depth image (distance along pixel rays)."""
        return self.position + depth[..., None] * self.pixel_dirs()

    def project(self, points):
        """Map world points to containing pixels.

        Returns (u, v, in_view); u, v are int arrays, valid only where
        in_view (point in front of the camera and inside the image).
        """
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        local = (points - self.position) @ self.rotation
        z = local[:, 2]
        ok = z > 1e-9
        th = self.tan_half_fov
        with np.errstate(divide="ignore", invalid="ignore"):
            xd = local[:, 0] / (z * th)
            yd = local[:, 1] / (z * th * self.aspect)
        u = np.floor((xd + 1.0) / 2.0 * self.n_x).astype(np.int64)
        v = np.floor((yd + 1.0) / 2.0 * self.n_y).astype(np.int64)
        ok &= (u >= 0) & (u < self.n_x) & (v >= 0) & (v < self.n_y)
        return u, v, ok


def look_at_rotation(forward, up=(0.0, 0.0, 1.0)):
    """Rotation whose camera +z is `forward`, +x to the right of `up`."""
    fwd = np.asarray(forward, dtype=np.float64)
    fwd = fwd / np.linalg.norm(fwd)
    upv = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, upv)
    nr = np.linalg.norm(right)
    if nr < 1e-9:
        raise GeometryError("forward direction parallel to up")
    right /= nr
    down = np.cross(fwd, right)
    return np.stack([right, down, fwd], axis=1)


@dataclass
class LidarRig:
    """Pinhole camera plus a pulsed laser steered over a grid of directions."""

    camera: CameraPose
    laser_pos: np.ndarray
    spot_dirs: np.ndarray       # (n_spots, 3) unit directions in world space

    def __post_init__(self):
        self.laser_pos = _as_point(self.laser_pos)
        self.spot_dirs = np.asarray(self.spot_dirs, dtype=np.float64)
        if self.spot_dirs.ndim != 2 or self.spot_dirs.shape[1] != 3 \
                or self.spot_dirs.shape[0] < 1:
            raise GeometryError("spot_dirs must be (n_spots, 3) with n_spots >= 1")
        norms = np.linalg.norm(self.spot_dirs, axis=1)
        if np.abs(norms - 1.0).max() > 1e-9:
            raise GeometryError("spot directions must be unit length")

    @property
    def n_spots(self):
        return self.spot_dirs.shape[0]


def spot_grid_dirs(camera, n_u, n_v, span=0.55, jitter=None, rng=None):
    """Steering directions forming an n_u x n_v grid across the camera view.

    span is the covered fraction of the half field of view; optional jitter
    perturbs each grid node by up to that fraction in tangent units.
    """
    th = camera.tan_half_fov
    xs = np.linspace(-span, span, n_u) * th
    ys = np.linspace(-span, span, n_v) * th * camera.aspect
    gx, gy = np.meshgrid(xs, ys)
    if jitter:
        if rng is None:
            rng = np.random.default_rng(0)
        gx = gx + rng.uniform(-jitter, jitter, gx.shape) * th
        gy = gy + rng.uniform(-jitter, jitter, gy.shape) * th
    cam = np.stack([gx.ravel(), gy.ravel(), np.ones(gx.size)], axis=-1)
    cam /= np.linalg.norm(cam, axis=-1, keepdims=True)
    return cam @ camera.rotation.T
