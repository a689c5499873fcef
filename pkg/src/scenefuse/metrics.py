"""Scene-completion evaluation: class-agnostic IoU, per-class mIoU, and
the out-of-view region mask.

Label grids use small integer class ids with 0 meaning empty; ground-truth
voxels flagged invalid never influence any counter. Accumulators are
mergeable, so disjoint scenes can be scored independently and added.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import project


@dataclass
class LabelGrid:
    """(X, Y, Z) class ids plus a boolean mask of voxels excluded from scoring."""

    labels: np.ndarray
    invalid: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        self.invalid = np.asarray(self.invalid, dtype=bool)
        if self.labels.shape != self.invalid.shape:
            raise ValueError(
                f"labels {self.labels.shape} and invalid {self.invalid.shape} shapes differ"
            )


@dataclass
class ViewMask:
    """True where the voxel center falls inside the current camera frustum."""

    in_view: np.ndarray


class ConfusionAccumulator:
    """Per-class and occupancy TP/FP/FN counters; merge by addition."""

    def __init__(self, num_classes):
        if num_classes < 2:
            raise ValueError(f"need at least empty + one class, got {num_classes}")
        self.num_classes = int(num_classes)
        self.tp = np.zeros(self.num_classes, dtype=np.int64)
        self.fp = np.zeros(self.num_classes, dtype=np.int64)
        self.fn = np.zeros(self.num_classes, dtype=np.int64)
        self.occ_tp = 0
        self.occ_fp = 0
        self.occ_fn = 0
        self.scored = 0

    def merge(self, other):
        if other.num_classes != self.num_classes:
            raise ValueError("cannot merge accumulators with different class counts")
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        self.occ_tp += other.occ_tp
        self.occ_fp += other.occ_fp
        self.occ_fn += other.occ_fn
        self.scored += other.scored
        return self


@dataclass
class MetricsResult:
    iou: float
    miou: float
    per_class_iou: np.ndarray  # NaN where the class is absent from pred and gt
    empty: bool

    def present_classes(self):
        return [c for c in range(1, self.per_class_iou.size)
                if np.isfinite(self.per_class_iou[c])]


def accumulate(acc, pred_labels, gt, region_mask=None):
    """Add one prediction/ground-truth pair to the accumulator.

    Voxels flagged invalid in gt are skipped, as are voxels outside
    region_mask when one is given. Occupancy treats label > 0 as occupied.
    """
    pred_labels = np.asarray(pred_labels)
    if pred_labels.shape != gt.labels.shape:
        raise ValueError(
            f"prediction {pred_labels.shape} and ground truth {gt.labels.shape} shapes differ"
        )
    mask = ~gt.invalid
    if region_mask is not None:
        region_mask = np.asarray(region_mask, dtype=bool)
        if region_mask.shape != gt.labels.shape:
            raise ValueError(
                f"region mask {region_mask.shape} does not match grid {gt.labels.shape}"
            )
        mask = mask & region_mask
    p = pred_labels[mask].astype(np.int64)
    g = gt.labels[mask].astype(np.int64)
    if p.size and (p.max() >= acc.num_classes or g.max() >= acc.num_classes):
        raise ValueError("label id exceeds accumulator class count")

    po = p > 0
    go = g > 0
    acc.occ_tp += int(np.count_nonzero(po & go))
    acc.occ_fp += int(np.count_nonzero(po & ~go))
    acc.occ_fn += int(np.count_nonzero(~po & go))
    acc.scored += int(p.size)

    k = acc.num_classes
    tp = np.bincount(g[p == g], minlength=k)
    pred_count = np.bincount(p, minlength=k)
    gt_count = np.bincount(g, minlength=k)
    acc.tp += tp
    acc.fp += pred_count - tp
    acc.fn += gt_count - tp
    return acc


def finalize(acc):
    """IoU on occupancy, per-class IoUs, and their unweighted mean.

    Classes absent from both prediction and ground truth are excluded from
    the mean; an accumulator that never scored a voxel comes back flagged
    empty with zero metrics.
    """
    if acc.scored == 0:
        return MetricsResult(0.0, 0.0, np.full(acc.num_classes, np.nan), True)
    occ_denom = acc.occ_tp + acc.occ_fp + acc.occ_fn
    iou = acc.occ_tp / occ_denom if occ_denom > 0 else 0.0
    per_class = np.full(acc.num_classes, np.nan)
    for c in range(1, acc.num_classes):
        denom = acc.tp[c] + acc.fp[c] + acc.fn[c]
        if denom > 0:
            per_class[c] = acc.tp[c] / denom
    present = np.isfinite(per_class[1:])
    miou = float(per_class[1:][present].mean()) if present.any() else 0.0
    return MetricsResult(float(iou), miou, per_class, False)


def oov_mask(bounds, intr, cam_from_ego):
    """Frustum test on voxel centers: a center is in-view when its camera-
    frame depth is positive and it projects inside the image rectangle.
    The out-of-view region is the complement."""
    centers = bounds.voxel_centers().reshape(-1, 3)
    cam = cam_from_ego.apply(centers)
    uv, z, behind = project(cam, intr)
    in_view = (
        ~behind
        & (uv[:, 0] >= 0)
        & (uv[:, 0] < intr.width)
        & (uv[:, 1] >= 0)
        & (uv[:, 1] < intr.height)
    )
    return ViewMask(in_view.reshape(bounds.resolution))
