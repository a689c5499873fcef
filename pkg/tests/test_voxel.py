import numpy as np
import pytest

from scenefuse.fusion import FeaturedPointCloud
from scenefuse.voxel import (
    CoverageStats,
    VoxelBounds,
    coverage_stats,
    filter_bounds,
    occupancy_masks,
    voxelize,
)


def _cloud(positions, features=None, origin=None):
    positions = np.asarray(positions, dtype=np.float64)
    n = positions.shape[0]
    if features is None:
        features = np.ones((n, 2), dtype=np.float32)
    if origin is None:
        origin = np.zeros(n, dtype=np.int32)
    return FeaturedPointCloud(positions, features, origin, np.zeros((n, 2)))


def _random_cloud(rng, n, lo=-1.0, hi=3.0, channels=3):
    return _cloud(
        rng.uniform(lo, hi, size=(n, 3)),
        rng.uniform(-1, 1, size=(n, channels)).astype(np.float32),
        rng.integers(0, 4, size=n).astype(np.int32),
    )


BOUNDS = VoxelBounds((0.0, 0.0, 0.0), (2.0, 2.0, 2.0), (4, 4, 4))


def brute_force_voxelize(cloud, bounds, n_frames):
    """O(N*V) reference: per-point box test and per-voxel sum."""
    rx, ry, rz = bounds.resolution
    size = np.asarray(bounds.voxel_size)
    lo = np.asarray(bounds.min_corner)
    feats = np.zeros((rx, ry, rz, cloud.channels), dtype=np.float64)
    counts = np.zeros((rx, ry, rz), dtype=np.int64)
    for i in range(len(cloud)):
        p = cloud.positions[i]
        if np.any(p < bounds.min_corner) or np.any(p >= bounds.max_corner):
            continue
        ix, iy, iz = (int(v) for v in np.minimum((p - lo) // size,
                                                 np.array([rx, ry, rz]) - 1))
        feats[ix, iy, iz] += cloud.features[i]
        counts[ix, iy, iz] += 1
    return feats / n_frames, counts


class TestVoxelBounds:
    def test_validation(self):
        with pytest.raises(ValueError):
            VoxelBounds((0, 0, 0), (0, 1, 1), (2, 2, 2))
        with pytest.raises(ValueError):
            VoxelBounds((0, 0, 0), (1, 1, 1), (2, 0, 2))

    def test_voxel_size(self):
        b = VoxelBounds((0, -25.6, -2.0), (51.2, 25.6, 4.4), (256, 256, 32))
        np.testing.assert_allclose(b.voxel_size, (0.2, 0.2, 0.2))


class TestFilterBounds:
    def test_all_inside(self, rng):
        cloud = _cloud(rng.uniform(0.1, 1.9, size=(30, 3)))
        out = filter_bounds(cloud, BOUNDS)
        np.testing.assert_array_equal(out.positions, cloud.positions)

    def test_max_corner_dropped(self):
        cloud = _cloud([[2.0, 1.0, 1.0], [1.999999, 1.0, 1.0], [0.0, 0.0, 0.0]])
        out = filter_bounds(cloud, BOUNDS)
        assert len(out) == 2

    def test_brute_force_parity(self, rng):
        cloud = _random_cloud(rng, 500)
        out = filter_bounds(cloud, BOUNDS)
        keep = [
            i for i in range(len(cloud))
            if np.all(cloud.positions[i] >= BOUNDS.min_corner)
            and np.all(cloud.positions[i] < BOUNDS.max_corner)
        ]
        np.testing.assert_array_equal(out.positions, cloud.positions[keep])
        np.testing.assert_array_equal(out.origin, cloud.origin[keep])


class TestVoxelize:
    def test_two_point_average(self):
        cloud = _cloud([[0.1, 0.1, 0.1], [0.2, 0.2, 0.2]],
                       np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32))
        grid = voxelize(cloud, BOUNDS, n_frames=2)
        np.testing.assert_array_equal(grid.features[0, 0, 0], [2.0, 3.0])
        assert grid.counts[0, 0, 0] == 2

    def test_empty_voxels_zero(self):
        grid = voxelize(_cloud(np.empty((0, 3))), BOUNDS, n_frames=2)
        assert not grid.features.any()
        assert not grid.counts.any()

    def test_brute_force_parity(self, rng):
        bounds = VoxelBounds((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0), (16, 16, 16))
        cloud = _random_cloud(rng, 1000, lo=-1.5, hi=1.5)
        grid = voxelize(cloud, bounds, n_frames=3)
        ref_feats, ref_counts = brute_force_voxelize(cloud, bounds, 3)
        np.testing.assert_array_equal(grid.counts, ref_counts)
        np.testing.assert_allclose(grid.features, ref_feats, rtol=1e-4, atol=1e-6)

    def test_conservation(self, rng):
        cloud = _random_cloud(rng, 20000)
        n = 4
        grid = voxelize(cloud, BOUNDS, n_frames=n)
        inside = filter_bounds(cloud, BOUNDS)
        total_grid = n * grid.features.sum(axis=(0, 1, 2)).astype(np.float64)
        total_pts = inside.features.sum(axis=0).astype(np.float64)
        np.testing.assert_allclose(total_grid, total_pts, rtol=1e-4)
        assert grid.counts.sum() == len(inside)

    def test_zero_frames_rejected(self):
        with pytest.raises(ValueError):
            voxelize(_cloud([[0.5, 0.5, 0.5]]), BOUNDS, n_frames=0)

    def test_deterministic_reruns_bit_identical(self, rng):
        cloud = _random_cloud(rng, 5000)
        a = voxelize(cloud, BOUNDS, n_frames=2, deterministic=True)
        b = voxelize(cloud, BOUNDS, n_frames=2, deterministic=True)
        assert a.features.tobytes() == b.features.tobytes()
        assert a.counts.tobytes() == b.counts.tobytes()

    def test_permutation_within_tolerance(self, rng):
        cloud = _random_cloud(rng, 5000)
        perm = rng.permutation(len(cloud))
        a = voxelize(cloud, BOUNDS, n_frames=2)
        b = voxelize(cloud.select(perm), BOUNDS, n_frames=2)
        np.testing.assert_array_equal(a.counts, b.counts)
        np.testing.assert_allclose(a.features, b.features, rtol=1e-4, atol=1e-6)

    def test_sharded_close_to_ordered(self, rng):
        cloud = _random_cloud(rng, 20000)
        a = voxelize(cloud, BOUNDS, n_frames=2, deterministic=True)
        b = voxelize(cloud, BOUNDS, n_frames=2, deterministic=False, shards=4)
        np.testing.assert_array_equal(a.counts, b.counts)
        np.testing.assert_allclose(a.features, b.features, rtol=1e-4, atol=1e-6)

    def test_index_bijection(self, rng):
        # every in-bounds point maps to one voxel whose half-open box
        # contains it
        bounds = VoxelBounds((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (5, 5, 5))
        pts = rng.uniform(0, 1, size=(2000, 3))
        from scenefuse.voxel import _voxel_indices

        idx = _voxel_indices(pts, bounds)
        size = np.asarray(bounds.voxel_size)
        lo_box = idx * size
        hi_box = (idx + 1) * size
        assert np.all(pts >= lo_box - 1e-12)
        assert np.all(pts < hi_box + 1e-12)


class TestOccupancy:
    def test_empty_grid(self):
        grid = voxelize(_cloud(np.empty((0, 3))), BOUNDS, 1)
        masks = occupancy_masks(grid)
        assert not masks.cross_mask.any()
        assert masks.self_mask.all()

    def test_single_voxel(self):
        grid = voxelize(_cloud([[0.1, 0.1, 0.1]]), BOUNDS, 1)
        masks = occupancy_masks(grid)
        assert masks.cross_mask.sum() == 1
        assert masks.cross_mask[0, 0, 0]

    def test_masks_partition(self, rng):
        grid = voxelize(_random_cloud(rng, 300), BOUNDS, 1)
        masks = occupancy_masks(grid)
        assert np.all(masks.cross_mask ^ masks.self_mask)


class TestCoverageStats:
    def test_fully_inside_proportion_one(self, rng):
        cloud = _cloud(rng.uniform(0.1, 1.9, size=(50, 3)))
        stats = coverage_stats(cloud, BOUNDS)
        assert len(stats.rows) == 1
        row = stats.rows[0]
        assert row.survivor_fraction == 1.0
        assert row.lifted_points == row.surviving_points == 50

    def test_per_offset_rows(self, rng):
        cloud = _random_cloud(rng, 400)
        stats = coverage_stats(cloud, BOUNDS)
        offsets = sorted({int(o) for o in cloud.origin})
        assert [r.offset for r in stats.rows] == offsets
        for r in stats.rows:
            assert 0.0 <= r.survivor_fraction <= 1.0
            assert 0.0 <= r.voxel_fraction <= 1.0
            assert r.touched_voxels <= BOUNDS.n_voxels

    def test_table_and_dict_shapes(self, rng):
        stats = coverage_stats(_random_cloud(rng, 100), BOUNDS)
        table = stats.as_table()
        assert "offset" in table and "t-0" in table
        d = stats.to_dict()
        assert d["total_voxels"] == BOUNDS.n_voxels
        assert len(d["rows"]) == len(stats.rows)
