"""Temporal point-feature fusion, voxel aggregation, and scene-completion
evaluation for forward-moving camera rigs."""

from ._kernels import backend
from .fusion import (
    FeaturedPointCloud,
    FrameBundle,
    FuseConfig,
    apply_blur,
    densify_current,
    fuse,
    hcb_weights,
    lift_frame,
    project_channels,
)
from .geometry import (
    CameraIntrinsics,
    PixelGrid,
    RigidTransform,
    backproject,
    make_pixel_grid,
    project,
    relative_pose,
    transform_points,
)
from .metrics import ConfusionAccumulator, LabelGrid, ViewMask, accumulate, finalize, oov_mask
from .resample import bilinear_resize, minmax_normalize, trilinear_resize
from .voxel import (
    FEATURE_GRID_BOUNDS,
    LABEL_GRID_BOUNDS,
    CoverageStats,
    FeatureVoxelGrid,
    OccupancyMasks,
    VoxelBounds,
    coverage_stats,
    filter_bounds,
    occupancy_masks,
    voxelize,
)

__version__ = "0.1.0"
