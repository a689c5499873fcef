"""Temporal fusion of lifted point features into the current camera frame.

Per frame: features are channel-projected, resized to the depth resolution,
and backprojected together with the depth map. Historical frames are
attenuated by depth-derived blur weights (closer surfaces keep more feature
mass) and warped into the current frame; the current frame can instead be
densified by upsampling its pixel grid, depth, and features before lifting.
The per-frame clouds are concatenated current-first with origin tags so the
downstream voxel accumulation is reproducible.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import (
    CameraIntrinsics,
    PixelGrid,
    RigidTransform,
    backproject,
    make_pixel_grid,
    relative_pose,
)
from .resample import bilinear_resize, minmax_normalize


@dataclass
class FrameBundle:
    """One time step: feature map (H', W', C), depth map (H, W) in meters
    (NaN or <= 0 marks invalid pixels), intrinsics, and world<-frame pose.
    timestamp_index 0 is the current frame, 1 is one step back, and so on."""

    features: np.ndarray
    depth: np.ndarray
    intrinsics: CameraIntrinsics
    pose: RigidTransform
    timestamp_index: int

    def __post_init__(self):
        self.features = np.asarray(self.features)
        self.depth = np.asarray(self.depth, dtype=np.float64)
        if self.timestamp_index < 0:
            raise ValueError(f"timestamp_index must be >= 0, got {self.timestamp_index}")
        if self.features.ndim != 3:
            raise ValueError(f"features must be (H, W, C), got shape {self.features.shape}")
        if self.depth.ndim != 2:
            raise ValueError(f"depth must be (H, W), got shape {self.depth.shape}")
        expected = (self.intrinsics.height, self.intrinsics.width)
        if self.depth.shape != expected:
            raise ValueError(
                f"depth shape {self.depth.shape} does not match intrinsics {expected}"
            )


@dataclass
class FuseConfig:
    n_frames: int = 4
    densify_factor: int = 2
    enable_hcb: bool = True
    enable_ccfd: bool = True
    # optional static channel projection: matrix (C_out, C_in) or (matrix, bias)
    channel_projection: object = None

    def __post_init__(self):
        if self.n_frames < 1:
            raise ValueError(f"n_frames must be >= 1, got {self.n_frames}")
        if self.densify_factor < 1:
            raise ValueError(f"densify_factor must be >= 1, got {self.densify_factor}")


@dataclass
class FeaturedPointCloud:
    """N lifted points with per-point features, frame-offset tags, and the
    sub-pixel (u, v) each point was lifted from. Positions are float64 in
    the current frame after alignment; features are float32."""

    positions: np.ndarray
    features: np.ndarray
    origin: np.ndarray
    source_pixel: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.features = np.asarray(self.features, dtype=np.float32)
        self.origin = np.asarray(self.origin, dtype=np.int32).reshape(-1)
        self.source_pixel = np.asarray(self.source_pixel, dtype=np.float64).reshape(-1, 2)
        n = self.positions.shape[0]
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ValueError(
                f"features must be (N, C) with N={n}, got {self.features.shape}"
            )
        if self.origin.shape[0] != n or self.source_pixel.shape[0] != n:
            raise ValueError("positions, features, origin, source_pixel lengths differ")

    def __len__(self):
        return self.positions.shape[0]

    @property
    def channels(self):
        return self.features.shape[1]

    @staticmethod
    def empty(channels):
        return FeaturedPointCloud(
            np.empty((0, 3)), np.empty((0, channels), dtype=np.float32),
            np.empty(0, dtype=np.int32), np.empty((0, 2)),
        )

    @staticmethod
    def concatenate(clouds):
        clouds = list(clouds)
        if not clouds:
            raise ValueError("cannot concatenate zero clouds")
        return FeaturedPointCloud(
            np.concatenate([c.positions for c in clouds]),
            np.concatenate([c.features for c in clouds]),
            np.concatenate([c.origin for c in clouds]),
            np.concatenate([c.source_pixel for c in clouds]),
        )

    def select(self, mask_or_index):
        return FeaturedPointCloud(
            self.positions[mask_or_index],
            self.features[mask_or_index],
            self.origin[mask_or_index],
            self.source_pixel[mask_or_index],
        )


def project_channels(features, projection):
    """Per-pixel affine map of channel vectors; identity when projection is None.

    projection is a (C_out, C_in) matrix or a (matrix, bias) pair.
    """
    if projection is None:
        return features
    if isinstance(projection, tuple):
        matrix, bias = projection
    else:
        matrix, bias = projection, None
    matrix = np.asarray(matrix, dtype=np.float64)
    features = np.asarray(features)
    if matrix.ndim != 2 or matrix.shape[1] != features.shape[-1]:
        raise ValueError(
            f"projection matrix {matrix.shape} does not accept {features.shape[-1]} channels"
        )
    out = features.astype(np.float64) @ matrix.T
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64).reshape(1, 1, -1)
    return out.astype(features.dtype, copy=False)


def _frame_feature_plane(frame, cfg):
    """Channel-projected features resized to the depth resolution."""
    feats = project_channels(frame.features, cfg.channel_projection)
    h, w = frame.depth.shape
    if feats.shape[:2] != (h, w):
        feats = bilinear_resize(feats, h, w)
    return feats


def _lift(depth, grid, intr, feats, offset):
    points, kept = backproject(depth, grid, intr)
    features = feats.reshape(-1, feats.shape[-1])[kept]
    uv = grid.coords.reshape(-1, 2)[kept]
    cloud = FeaturedPointCloud(
        points,
        np.ascontiguousarray(features, dtype=np.float32),
        np.full(kept.size, offset, dtype=np.int32),
        uv,
    )
    return cloud, kept


def lift_frame(frame, cfg=None):
    """Lift one frame into frame-local 3D points with aligned features."""
    cfg = cfg or FuseConfig()
    feats = _frame_feature_plane(frame, cfg)
    h, w = frame.depth.shape
    grid = make_pixel_grid(h, w)
    cloud, _ = _lift(frame.depth, grid, frame.intrinsics, feats, frame.timestamp_index)
    return cloud


def hcb_weights(depth):
    """Per-pixel blur weights for a historical depth map: 1 - minmax(depth).

    The nearest valid pixel gets weight 1, the farthest 0; a constant map
    degenerates to weight 1 everywhere. Invalid pixels (non-finite or <= 0)
    are excluded from the statistics and get weight 0.
    """
    depth = np.asarray(depth, dtype=np.float64)
    masked = np.where(np.isfinite(depth) & (depth > 0), depth, np.nan)
    if not np.isfinite(masked).any():
        raise ValueError("depth map has no valid pixels to derive blur weights from")
    weights = 1.0 - minmax_normalize(masked)
    return np.where(np.isfinite(weights), weights, 0.0)


def apply_blur(cloud, weights):
    """Scale per-point features by scalar weights; geometry is untouched."""
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if weights.shape[0] != len(cloud):
        raise ValueError(
            f"{weights.shape[0]} weights for {len(cloud)} points"
        )
    blurred = (cloud.features.astype(np.float64) * weights[:, None]).astype(np.float32)
    return FeaturedPointCloud(cloud.positions, blurred, cloud.origin, cloud.source_pixel)


def densify_current(frame, factor, projection=None):
    """Upsample the current frame's pixel grid, depth, and projected features
    by `factor` with half-pixel bilinear sampling; the grid itself is
    interpolated, so subsequent lifting uses sub-pixel ray origins.

    Returns (grid, depth, features); factor 1 returns them unchanged.
    """
    if frame.timestamp_index != 0:
        raise ValueError("densification applies to the current frame only")
    factor = int(factor)
    if factor < 1:
        raise ValueError(f"densify factor must be >= 1, got {factor}")
    cfg = FuseConfig(densify_factor=factor, channel_projection=projection)
    feats = _frame_feature_plane(frame, cfg)
    h, w = frame.depth.shape
    grid = make_pixel_grid(h, w)
    if factor == 1:
        return grid, frame.depth, feats
    oh, ow = h * factor, w * factor
    up_coords = bilinear_resize(grid.coords, oh, ow)
    up_depth = bilinear_resize(frame.depth, oh, ow)
    up_feats = bilinear_resize(feats, oh, ow)
    return PixelGrid(up_coords), up_depth, up_feats


def fuse(frames, cfg=None):
    """Fuse an ordered frame sequence into one current-frame point cloud.

    The current frame (offset 0) is lifted with densification when enabled;
    each historical frame is lifted at native resolution, feature-blurred
    when enabled, and warped by the relative pose into the current frame.
    Clouds are concatenated in offset order, current first. No boundary
    filtering happens here.
    """
    cfg = cfg or FuseConfig()
    frames = sorted(frames, key=lambda f: f.timestamp_index)
    offsets = [f.timestamp_index for f in frames]
    if len(set(offsets)) != len(offsets):
        raise ValueError(f"duplicate timestamp offsets: {offsets}")
    if offsets != list(range(len(frames))):
        raise ValueError(f"offsets must be exactly 0..{len(frames) - 1}, got {offsets}")
    current = frames[0]

    if cfg.enable_ccfd and cfg.densify_factor > 1:
        grid, depth, feats = densify_current(current, cfg.densify_factor,
                                             cfg.channel_projection)
        current_cloud, _ = _lift(depth, grid, current.intrinsics, feats, 0)
    else:
        current_cloud = lift_frame(current, cfg)

    clouds = [current_cloud]
    for frame in frames[1:]:
        feats = _frame_feature_plane(frame, cfg)
        h, w = frame.depth.shape
        grid = make_pixel_grid(h, w)
        cloud, kept = _lift(frame.depth, grid, frame.intrinsics, feats,
                            frame.timestamp_index)
        if cfg.enable_hcb and len(cloud):
            w_map = hcb_weights(frame.depth)
            cloud = apply_blur(cloud, w_map.ravel()[kept])
        warp = relative_pose(frame.pose, current.pose)
        cloud = FeaturedPointCloud(
            warp.apply(cloud.positions), cloud.features, cloud.origin, cloud.source_pixel
        )
        clouds.append(cloud)
    return FeaturedPointCloud.concatenate(clouds)
