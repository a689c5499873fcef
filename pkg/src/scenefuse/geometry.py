"""Pinhole camera model, pixel grids, backprojection, and SE(3) transforms.

Conventions:
    Camera frame: +X right, +Y down, +Z forward (rectified pinhole).
    Pixels: u along width (columns), v along height (rows), origin top-left.
    Invalid depth: d <= 0 or non-finite; such pixels produce no points.

Poses and point coordinates are double precision throughout; pose chains
amplify rounding, features do not.
"""

from dataclasses import dataclass, field

import numpy as np

ROTATION_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Focal lengths and principal point in pixels, plus image size."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be at least 1x1, got {self.width}x{self.height}")

    def matrix(self):
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def with_size(self, width, height):
        return CameraIntrinsics(self.fx, self.fy, self.cx, self.cy, int(width), int(height))


@dataclass
class RigidTransform:
    """SE(3) pose: p' = rotation @ p + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self.rotation.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {self.rotation.shape}")
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > ROTATION_TOL:
            raise ValueError(f"rotation is not orthonormal (max |R^T R - I| = {err:.3e})")
        det = np.linalg.det(self.rotation)
        if abs(det - 1.0) > ROTATION_TOL:
            raise ValueError(f"rotation determinant must be +1, got {det!r}")

    @staticmethod
    def identity():
        return RigidTransform(np.eye(3), np.zeros(3))

    def compose(self, other):
        """self ∘ other: apply `other` first, then `self`."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self):
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, points):
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @staticmethod
    def from_matrix(m):
        m = np.asarray(m, dtype=np.float64)
        return RigidTransform(m[:3, :3], m[:3, 3])


@dataclass(frozen=True)
class PixelGrid:
    """H x W x 2 array of (u, v) pixel coordinates; sub-pixel values allowed."""

    coords: np.ndarray = field(repr=False)

    @property
    def height(self):
        return self.coords.shape[0]

    @property
    def width(self):
        return self.coords.shape[1]


def make_pixel_grid(height, width):
    """Integer pixel-center grid with coords[r, c] = (c, r)."""
    if height < 1 or width < 1:
        raise ValueError(f"grid dimensions must be at least 1, got {height}x{width}")
    us = np.arange(width, dtype=np.float64)
    vs = np.arange(height, dtype=np.float64)
    coords = np.empty((height, width, 2))
    coords[:, :, 0] = us[None, :]
    coords[:, :, 1] = vs[:, None]
    return PixelGrid(coords)


def backproject(depth, grid, intr):
    """Lift per-pixel depth through the inverse pinhole model.

    Returns (points, kept): camera-frame points (N, 3) float64 for every
    valid pixel, and the flat row-major indices of those pixels so that
    per-pixel feature arrays can be subset consistently.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != grid.coords.shape[:2]:
        raise ValueError(
            f"depth shape {depth.shape} does not match grid {grid.coords.shape[:2]}"
        )
    flat_d = depth.ravel()
    valid = np.isfinite(flat_d) & (flat_d > 0)
    kept = np.flatnonzero(valid)
    d = flat_d[kept]
    uv = grid.coords.reshape(-1, 2)[kept]
    points = np.empty((kept.size, 3))
    points[:, 0] = (uv[:, 0] - intr.cx) / intr.fx * d
    points[:, 1] = (uv[:, 1] - intr.cy) / intr.fy * d
    points[:, 2] = d
    return points, kept


def project(points, intr):
    """Pinhole projection. Returns (uv, z, behind); uv is NaN where z <= 0."""
    points = np.asarray(points, dtype=np.float64)
    z = points[:, 2]
    behind = z <= 0
    uv = np.full((points.shape[0], 2), np.nan)
    front = ~behind
    zf = z[front]
    uv[front, 0] = intr.fx * points[front, 0] / zf + intr.cx
    uv[front, 1] = intr.fy * points[front, 1] / zf + intr.cy
    return uv, z.copy(), behind


def relative_pose(src, dst):
    """Transform taking frame_i coordinates to frame_t coordinates, given
    world<-frame_i (src) and world<-frame_t (dst) poses: dst^-1 ∘ src."""
    return dst.inverse().compose(src)


def transform_points(points, transform):
    return transform.apply(points)
