import numpy as np
import pytest

from scenefuse.geometry import CameraIntrinsics, RigidTransform
from scenefuse.metrics import (
    ConfusionAccumulator,
    LabelGrid,
    accumulate,
    finalize,
    oov_mask,
)
from scenefuse.voxel import VoxelBounds


def _grid(labels, invalid=None):
    labels = np.asarray(labels)
    if invalid is None:
        invalid = np.zeros(labels.shape, dtype=bool)
    return LabelGrid(labels, invalid)


def _score(pred, gt, num_classes=4, region=None):
    acc = ConfusionAccumulator(num_classes)
    accumulate(acc, np.asarray(pred), gt, region)
    return acc, finalize(acc)


class TestAccumulate:
    def test_perfect_prediction(self, rng):
        labels = rng.integers(0, 4, size=(4, 4, 2))
        _, res = _score(labels, _grid(labels))
        assert res.iou == 1.0
        for c in res.present_classes():
            assert res.per_class_iou[c] == 1.0

    def test_all_empty_prediction(self):
        gt = _grid(np.array([[[1, 1, 0, 2]]]))
        acc, res = _score(np.zeros((1, 1, 4), dtype=int), gt)
        assert acc.occ_tp == 0
        assert acc.occ_fn == 3
        assert res.iou == 0.0

    def test_hand_confusion(self):
        # gt [1,1,0,2] vs pred [1,0,0,2]:
        # occupancy TP=2 FP=0 FN=1 -> 2/3; class1 TP=1 FN=1 -> 1/2; class2 -> 1
        gt = _grid(np.array([[[1, 1, 0, 2]]]))
        _, res = _score(np.array([[[1, 0, 0, 2]]]), gt)
        assert res.iou == pytest.approx(2 / 3)
        assert res.per_class_iou[1] == pytest.approx(1 / 2)
        assert res.per_class_iou[2] == pytest.approx(1.0)

    def test_symmetric_half_overlap(self):
        # TP=1 FP=1 FN=1 -> IoU = mIoU = 1/3
        gt = _grid(np.array([[[1, 1, 0]]]))
        _, res = _score(np.array([[[0, 1, 1]]]), gt, num_classes=2)
        assert res.iou == pytest.approx(1 / 3)
        assert res.miou == pytest.approx(1 / 3)

    def test_dim_mismatch(self):
        acc = ConfusionAccumulator(3)
        with pytest.raises(ValueError):
            accumulate(acc, np.zeros((2, 2, 2), dtype=int),
                       _grid(np.zeros((2, 2, 3), dtype=int)))

    def test_invalid_voxels_immune(self, rng):
        gt_labels = rng.integers(0, 4, size=(5, 5, 3))
        invalid = rng.uniform(size=gt_labels.shape) < 0.3
        gt = _grid(gt_labels, invalid)
        pred = rng.integers(0, 4, size=gt_labels.shape)
        flipped = pred.copy()
        flipped[invalid] = (flipped[invalid] + 1) % 4
        acc_a, _ = _score(pred, gt)
        acc_b, _ = _score(flipped, gt)
        np.testing.assert_array_equal(acc_a.tp, acc_b.tp)
        np.testing.assert_array_equal(acc_a.fp, acc_b.fp)
        np.testing.assert_array_equal(acc_a.fn, acc_b.fn)
        assert (acc_a.occ_tp, acc_a.occ_fp, acc_a.occ_fn) == \
            (acc_b.occ_tp, acc_b.occ_fp, acc_b.occ_fn)


class TestFinalize:
    def test_empty_accumulator_flagged(self):
        res = finalize(ConfusionAccumulator(3))
        assert res.empty
        assert res.iou == 0.0 and res.miou == 0.0

    def test_absent_class_excluded_from_mean(self):
        gt = _grid(np.array([[[1, 1]]]))
        _, res = _score(np.array([[[1, 1]]]), gt, num_classes=5)
        assert np.isnan(res.per_class_iou[3])
        assert res.miou == 1.0

    def test_merge_equals_joint(self, rng):
        gt1 = _grid(rng.integers(0, 3, size=(3, 3, 3)))
        gt2 = _grid(rng.integers(0, 3, size=(3, 3, 3)))
        p1 = rng.integers(0, 3, size=(3, 3, 3))
        p2 = rng.integers(0, 3, size=(3, 3, 3))
        a = ConfusionAccumulator(3)
        accumulate(a, p1, gt1)
        accumulate(a, p2, gt2)
        b1 = ConfusionAccumulator(3)
        accumulate(b1, p1, gt1)
        b2 = ConfusionAccumulator(3)
        accumulate(b2, p2, gt2)
        b1.merge(b2)
        np.testing.assert_array_equal(a.tp, b1.tp)
        assert a.occ_fn == b1.occ_fn and a.scored == b1.scored


class TestRegionDecomposition:
    def test_counters_add_up_exactly(self, rng):
        shape = (6, 6, 4)
        gt = _grid(rng.integers(0, 5, size=shape),
                   rng.uniform(size=shape) < 0.2)
        pred = rng.integers(0, 5, size=shape)
        region = rng.uniform(size=shape) < 0.5
        acc_all, _ = _score(pred, gt, num_classes=5)
        acc_in, _ = _score(pred, gt, num_classes=5, region=region)
        acc_out, _ = _score(pred, gt, num_classes=5, region=~region)
        acc_in.merge(acc_out)
        np.testing.assert_array_equal(acc_in.tp, acc_all.tp)
        np.testing.assert_array_equal(acc_in.fp, acc_all.fp)
        np.testing.assert_array_equal(acc_in.fn, acc_all.fn)
        assert (acc_in.occ_tp, acc_in.occ_fp, acc_in.occ_fn) == \
            (acc_all.occ_tp, acc_all.occ_fp, acc_all.occ_fn)
        assert acc_in.scored == acc_all.scored

    def test_relabel_permutation_preserves_miou(self, rng):
        shape = (5, 5, 2)
        gt_labels = rng.integers(0, 4, size=shape)
        pred = rng.integers(0, 4, size=shape)
        perm = np.array([0, 3, 1, 2])  # class bijection, empty fixed
        _, res = _score(pred, _grid(gt_labels))
        _, res_p = _score(perm[pred], _grid(perm[gt_labels]))
        assert res_p.miou == pytest.approx(res.miou, abs=1e-12)
        for c in range(1, 4):
            a = res.per_class_iou[c]
            b = res_p.per_class_iou[perm[c]]
            assert (np.isnan(a) and np.isnan(b)) or a == pytest.approx(b, abs=1e-12)


class TestOovMask:
    BOUNDS = VoxelBounds((-2.0, -2.0, -2.0), (2.0, 2.0, 2.0), (8, 8, 4))
    INTR = CameraIntrinsics(fx=4.0, fy=4.0, cx=4.0, cy=3.0, width=8, height=6)

    def test_behind_camera_is_oov(self):
        bounds = VoxelBounds((-1.0, -1.0, -1.0), (0.0, 0.0, 0.0), (1, 1, 1))
        view = oov_mask(bounds, self.INTR, RigidTransform.identity())
        assert not view.in_view[0, 0, 0]

    def test_principal_ray_in_view(self):
        bounds = VoxelBounds((-0.5, -0.5, 9.5), (0.5, 0.5, 10.5), (1, 1, 1))
        view = oov_mask(bounds, self.INTR, RigidTransform.identity())
        assert view.in_view[0, 0, 0]

    def test_brute_force_parity(self, rng):
        from conftest import random_rotation

        cam_from_ego = RigidTransform(random_rotation(rng), rng.standard_normal(3))
        view = oov_mask(self.BOUNDS, self.INTR, cam_from_ego)
        centers = self.BOUNDS.voxel_centers()
        for ix in range(8):
            for iy in range(8):
                for iz in range(4):
                    c = cam_from_ego.apply(centers[ix, iy, iz][None, :])[0]
                    if c[2] <= 0:
                        expected = False
                    else:
                        u = self.INTR.fx * c[0] / c[2] + self.INTR.cx
                        v = self.INTR.fy * c[1] / c[2] + self.INTR.cy
                        expected = (0 <= u < 8) and (0 <= v < 6)
                    assert view.in_view[ix, iy, iz] == expected
