"""Boundary filtering, voxel feature aggregation, occupancy masks, and
temporal-coverage statistics.

Voxels are half-open boxes [min, max) with floor indexing; a point sitting
exactly on the global max face is dropped. Aggregation sums point features
per voxel and divides by the frame count; empty voxels hold the zero
vector. Accumulation order is point-index order in deterministic mode and
sharded-then-merged otherwise (bit-identical only in deterministic mode).
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class VoxelBounds:
    """Axis-aligned grid extent in meters plus per-axis cell counts."""

    min_corner: tuple
    max_corner: tuple
    resolution: tuple

    def __post_init__(self):
        object.__setattr__(self, "min_corner", tuple(float(v) for v in self.min_corner))
        object.__setattr__(self, "max_corner", tuple(float(v) for v in self.max_corner))
        object.__setattr__(self, "resolution", tuple(int(v) for v in self.resolution))
        if len(self.min_corner) != 3 or len(self.max_corner) != 3 or len(self.resolution) != 3:
            raise ValueError("bounds need 3 components per field")
        if any(hi <= lo for lo, hi in zip(self.min_corner, self.max_corner)):
            raise ValueError(
                f"max corner must exceed min corner, got {self.min_corner} .. {self.max_corner}"
            )
        if any(r < 1 for r in self.resolution):
            raise ValueError(f"resolution must be >= 1 per axis, got {self.resolution}")

    @property
    def voxel_size(self):
        return tuple(
            (hi - lo) / r
            for lo, hi, r in zip(self.min_corner, self.max_corner, self.resolution)
        )

    @property
    def n_voxels(self):
        x, y, z = self.resolution
        return x * y * z

    def voxel_centers(self):
        """(X, Y, Z, 3) array of cell-center coordinates."""
        axes = [
            lo + (np.arange(r) + 0.5) * s
            for lo, r, s in zip(self.min_corner, self.resolution, self.voxel_size)
        ]
        gx, gy, gz = np.meshgrid(*axes, indexing="ij")
        return np.stack([gx, gy, gz], axis=-1)


# SemanticKITTI-style defaults in the ego frame (x forward, y left, z up):
# labels at 0.2 m, feature grids at 0.4 m over the same extent.
LABEL_GRID_BOUNDS = VoxelBounds((0.0, -25.6, -2.0), (51.2, 25.6, 4.4), (256, 256, 32))
FEATURE_GRID_BOUNDS = VoxelBounds((0.0, -25.6, -2.0), (51.2, 25.6, 4.4), (128, 128, 16))


@dataclass
class FeatureVoxelGrid:
    """Aggregated per-voxel features (X, Y, Z, C) float32, point counts,
    and the frame-count divisor used during aggregation."""

    features: np.ndarray
    counts: np.ndarray
    n_frames: int

    @property
    def resolution(self):
        return self.counts.shape


@dataclass
class OccupancyMasks:
    cross_mask: np.ndarray
    self_mask: np.ndarray


@dataclass
class CoverageRow:
    offset: int
    lifted_points: int
    surviving_points: int
    survivor_fraction: float
    touched_voxels: int
    voxel_fraction: float


@dataclass
class CoverageStats:
    rows: list
    total_voxels: int

    def as_table(self):
        lines = [
            f"{'offset':>8} {'lifted':>10} {'surviving':>10} {'survive%':>9} "
            f"{'voxels':>8} {'voxel%':>8}"
        ]
        for r in self.rows:
            lines.append(
                f"{'t-' + str(r.offset):>8} {r.lifted_points:>10} {r.surviving_points:>10} "
                f"{100 * r.survivor_fraction:>8.2f}% {r.touched_voxels:>8} "
                f"{100 * r.voxel_fraction:>7.2f}%"
            )
        return "\n".join(lines)

    def to_dict(self):
        return {
            "total_voxels": self.total_voxels,
            "rows": [
                {
                    "offset": r.offset,
                    "lifted_points": r.lifted_points,
                    "surviving_points": r.surviving_points,
                    "survivor_fraction": r.survivor_fraction,
                    "touched_voxels": r.touched_voxels,
                    "voxel_fraction": r.voxel_fraction,
                }
                for r in self.rows
            ],
        }


def _inside(positions, bounds):
    lo = np.asarray(bounds.min_corner)
    hi = np.asarray(bounds.max_corner)
    return np.all(positions >= lo, axis=1) & np.all(positions < hi, axis=1)


def filter_bounds(cloud, bounds):
    """Keep points with min <= p < max componentwise."""
    return cloud.select(_inside(cloud.positions, bounds))


def _voxel_indices(positions, bounds):
    """Per-axis cell indices for in-bounds points (clipped against the
    occasional float round-up at the max face)."""
    lo = np.asarray(bounds.min_corner)
    size = np.asarray(bounds.voxel_size)
    idx = np.floor((positions - lo) / size).astype(np.int64)
    np.clip(idx, 0, np.asarray(bounds.resolution) - 1, out=idx)
    return idx


def _flatten_indices(idx, resolution):
    _, ry, rz = resolution
    return idx[:, 0] * (ry * rz) + idx[:, 1] * rz + idx[:, 2]


def voxelize(cloud, bounds, n_frames, deterministic=True, shards=1):
    """Aggregate point features onto the grid: per voxel, the feature sum
    divided by n_frames (zero vector where no point lands); counts record
    the raw number of points per voxel. Out-of-bounds points are dropped
    first, so pre-filtered and raw clouds give the same result.
    """
    n_frames = int(n_frames)
    if n_frames < 1:
        raise ValueError(f"n_frames must be >= 1, got {n_frames}")
    kept = filter_bounds(cloud, bounds)
    rx, ry, rz = bounds.resolution
    n_vox = rx * ry * rz
    nc = kept.channels
    if len(kept) == 0:
        return FeatureVoxelGrid(
            np.zeros((rx, ry, rz, nc), dtype=np.float32),
            np.zeros((rx, ry, rz), dtype=np.int64),
            n_frames,
        )
    flat = _flatten_indices(_voxel_indices(kept.positions, bounds), bounds.resolution)
    feats = np.ascontiguousarray(kept.features, dtype=np.float32)
    if deterministic or shards <= 1:
        sums = _kernels.scatter_add(flat, feats, n_vox)
    else:
        sums = _kernels.scatter_add_sharded(flat, feats, n_vox, int(shards))
    counts = np.bincount(flat, minlength=n_vox)
    features = (sums / np.float32(n_frames)).reshape(rx, ry, rz, nc)
    return FeatureVoxelGrid(features, counts.reshape(rx, ry, rz), n_frames)


def occupancy_masks(grid):
    cross = grid.counts > 0
    return OccupancyMasks(cross_mask=cross, self_mask=~cross)


def coverage_stats(cloud, bounds):
    """Per time offset: how many of that frame's lifted points survive the
    boundary filter, and how many distinct voxels they touch."""
    inside = _inside(cloud.positions, bounds)
    total_vox = bounds.n_voxels
    rows = []
    for offset in np.unique(cloud.origin):
        sel = cloud.origin == offset
        lifted = int(sel.sum())
        kept_mask = sel & inside
        surviving = int(kept_mask.sum())
        if surviving:
            idx = _voxel_indices(cloud.positions[kept_mask], bounds)
            touched = int(np.unique(_flatten_indices(idx, bounds.resolution)).size)
        else:
            touched = 0
        rows.append(
            CoverageRow(
                offset=int(offset),
                lifted_points=lifted,
                surviving_points=surviving,
                survivor_fraction=surviving / lifted if lifted else 0.0,
                touched_voxels=touched,
                voxel_fraction=touched / total_vox,
            )
        )
    return CoverageStats(rows=rows, total_voxels=total_vox)
