"""Deterministic analytic scene generator for end-to-end oracle tests.

Scenes are axis-aligned boxes and horizontal ground planes in a fixed world
frame (x forward, y left, z up); the rig drives along +x at constant speed,
one scan per frame, with a camera mounted via a fixed camera<-ego rotation.
Depth maps come from exact ray/primitive intersections (no sampling noise
unless explicitly requested); feature maps are one-hot class colorings so a
per-voxel argmax acts as a trivial semantic head.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .geometry import CameraIntrinsics, RigidTransform
from .metrics import LabelGrid
from .voxel import VoxelBounds

# camera x right / y down / z forward mapped onto ego x forward / y left / z up
KITTI_CAM_FROM_EGO = RigidTransform(
    np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]]),
    np.zeros(3),
)


@dataclass
class BoxPrimitive:
    class_id: int
    min_corner: tuple
    max_corner: tuple

    def __post_init__(self):
        self.min_corner = tuple(float(v) for v in self.min_corner)
        self.max_corner = tuple(float(v) for v in self.max_corner)
        if any(hi <= lo for lo, hi in zip(self.min_corner, self.max_corner)):
            raise ValueError(f"degenerate box {self.min_corner} .. {self.max_corner}")
        if self.class_id < 1:
            raise ValueError("primitive class ids start at 1 (0 is empty)")

    def corners(self):
        lo, hi = self.min_corner, self.max_corner
        return np.array([
            (x, y, z) for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])
        ])

    def contains(self, points):
        points = np.asarray(points)
        lo = np.asarray(self.min_corner)
        hi = np.asarray(self.max_corner)
        return np.all(points >= lo, axis=-1) & np.all(points <= hi, axis=-1)


@dataclass
class GroundPlane:
    """Horizontal surface at world z = height; containment uses a slab of
    the given thickness below the surface."""

    class_id: int
    height: float
    thickness: float = 0.2

    def __post_init__(self):
        if self.thickness <= 0:
            raise ValueError("plane thickness must be positive")
        if self.class_id < 1:
            raise ValueError("primitive class ids start at 1 (0 is empty)")

    def contains(self, points):
        z = np.asarray(points)[..., 2]
        return (z >= self.height - self.thickness) & (z <= self.height)


@dataclass
class SceneSpec:
    boxes: list
    planes: list
    intrinsics: CameraIntrinsics
    frame_count: int
    speed: float
    seed: int = 0
    depth_noise: float = 0.0
    cam_from_ego: RigidTransform = field(default_factory=lambda: KITTI_CAM_FROM_EGO)
    num_classes: int = 0

    def __post_init__(self):
        if self.frame_count < 1:
            raise ValueError(f"frame_count must be >= 1, got {self.frame_count}")
        top = max([p.class_id for p in self.boxes + self.planes], default=0)
        if self.num_classes <= top:
            self.num_classes = top + 1

    def ego_pose(self, scan):
        """world<-ego at the given scan index (rig advances along +x)."""
        return RigidTransform(np.eye(3), np.array([self.speed * scan, 0.0, 0.0]))

    def camera_pose(self, scan):
        """world<-camera at the given scan index."""
        return self.ego_pose(scan).compose(self.cam_from_ego.inverse())

    def to_dict(self):
        return {
            "boxes": [
                {"class_id": b.class_id, "min_corner": list(b.min_corner),
                 "max_corner": list(b.max_corner)}
                for b in self.boxes
            ],
            "planes": [
                {"class_id": p.class_id, "height": p.height, "thickness": p.thickness}
                for p in self.planes
            ],
            "intrinsics": {
                "fx": self.intrinsics.fx, "fy": self.intrinsics.fy,
                "cx": self.intrinsics.cx, "cy": self.intrinsics.cy,
                "width": self.intrinsics.width, "height": self.intrinsics.height,
            },
            "cam_from_ego": {
                "rotation": self.cam_from_ego.rotation.tolist(),
                "translation": self.cam_from_ego.translation.tolist(),
            },
            "frame_count": self.frame_count,
            "speed": self.speed,
            "seed": self.seed,
            "depth_noise": self.depth_noise,
            "num_classes": self.num_classes,
        }

    @staticmethod
    def from_dict(d):
        return SceneSpec(
            boxes=[BoxPrimitive(b["class_id"], b["min_corner"], b["max_corner"])
                   for b in d.get("boxes", [])],
            planes=[GroundPlane(p["class_id"], p["height"], p.get("thickness", 0.2))
                    for p in d.get("planes", [])],
            intrinsics=CameraIntrinsics(**d["intrinsics"]),
            frame_count=d["frame_count"],
            speed=d["speed"],
            seed=d.get("seed", 0),
            depth_noise=d.get("depth_noise", 0.0),
            cam_from_ego=RigidTransform(
                np.array(d["cam_from_ego"]["rotation"]),
                np.array(d["cam_from_ego"]["translation"]),
            ) if "cam_from_ego" in d else KITTI_CAM_FROM_EGO,
            num_classes=d.get("num_classes", 0),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text):
        return SceneSpec.from_dict(json.loads(text))


def _primitive_arrays(spec):
    if spec.boxes:
        boxes = np.array([list(b.min_corner) + list(b.max_corner) for b in spec.boxes])
        box_cls = np.array([b.class_id for b in spec.boxes], dtype=np.int32)
    else:
        boxes = np.zeros((0, 6))
        box_cls = np.zeros(0, dtype=np.int32)
    plane_h = np.array([p.height for p in spec.planes], dtype=np.float64)
    plane_cls = np.array([p.class_id for p in spec.planes], dtype=np.int32)
    return boxes, box_cls, plane_h, plane_cls


def _render(spec, frame_index):
    if frame_index >= spec.frame_count or frame_index < 0:
        raise ValueError(
            f"frame index {frame_index} outside 0..{spec.frame_count - 1}"
        )
    intr = spec.intrinsics
    pose = spec.camera_pose(frame_index)
    us = np.arange(intr.width, dtype=np.float64)
    vs = np.arange(intr.height, dtype=np.float64)
    d_cam = np.empty((intr.height, intr.width, 3))
    d_cam[:, :, 0] = ((us - intr.cx) / intr.fx)[None, :]
    d_cam[:, :, 1] = ((vs - intr.cy) / intr.fy)[:, None]
    d_cam[:, :, 2] = 1.0
    dirs = d_cam @ pose.rotation.T
    boxes, box_cls, plane_h, plane_cls = _primitive_arrays(spec)
    depth, cls = _kernels.raycast(
        np.ascontiguousarray(pose.translation), np.ascontiguousarray(dirs),
        boxes, box_cls, plane_h, plane_cls,
    )
    if spec.depth_noise > 0:
        rng = np.random.default_rng([spec.seed, frame_index])
        noise = spec.depth_noise * rng.standard_normal(depth.shape)
        depth = np.where(np.isfinite(depth), np.maximum(depth + noise, 1e-3), depth)
    return depth, cls


def render_depth(spec, frame_index):
    """Per-pixel nearest-hit depth in meters; background pixels are NaN.
    The value is the camera-frame Z of the hit, matching the pinhole model."""
    depth, _ = _render(spec, frame_index)
    return depth


def render_features(spec, frame_index):
    """One-hot class coloring per pixel, (H, W, num_classes) float32."""
    _, cls = _render(spec, frame_index)
    return np.eye(spec.num_classes, dtype=np.float32)[cls]


def ground_truth_labels(spec, bounds):
    """Voxel labels in the ego frame of the last (current) scan: the class
    of the first listed primitive containing each voxel center, else empty."""
    centers = bounds.voxel_centers().reshape(-1, 3)
    world = spec.ego_pose(spec.frame_count - 1).apply(centers)
    labels = np.zeros(world.shape[0], dtype=np.uint16)
    for prim in list(spec.boxes) + list(spec.planes):
        hit = prim.contains(world) & (labels == 0)
        labels[hit] = prim.class_id
    return LabelGrid(
        labels.reshape(bounds.resolution),
        np.zeros(bounds.resolution, dtype=bool),
    )


# ---------------------------------------------------------------------------
# frustum checks, exact on box corners
# ---------------------------------------------------------------------------

def _camera_frame_corners(spec, box, frame_index):
    cam_from_world = spec.camera_pose(frame_index).inverse()
    return cam_from_world.apply(box.corners())


def box_fully_visible(spec, box, frame_index):
    """All eight corners project strictly inside the image with Z > 0."""
    c = _camera_frame_corners(spec, box, frame_index)
    intr = spec.intrinsics
    z = c[:, 2]
    if not np.all(z > 0):
        return False
    u = intr.fx * c[:, 0] / z + intr.cx
    v = intr.fy * c[:, 1] / z + intr.cy
    return bool(np.all((u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)))


def box_fully_hidden(spec, box, frame_index):
    """True when one frustum halfspace separates the whole box from the
    camera frustum (sufficient, exact for convex shapes)."""
    c = _camera_frame_corners(spec, box, frame_index)
    intr = spec.intrinsics
    x, y, z = c[:, 0], c[:, 1], c[:, 2]
    tests = [
        np.all(z <= 0),
        np.all(intr.fx * x + intr.cx * z < 0),
        np.all(intr.fx * x + (intr.cx - intr.width) * z >= 0),
        np.all(intr.fy * y + intr.cy * z < 0),
        np.all(intr.fy * y + (intr.cy - intr.height) * z >= 0),
    ]
    return bool(any(tests))


# ---------------------------------------------------------------------------
# scenario builders
# ---------------------------------------------------------------------------

DEFAULT_INTRINSICS = CameraIntrinsics(fx=48.0, fy=48.0, cx=64.0, cy=48.0,
                                      width=128, height=96)

OOV_BOUNDS = VoxelBounds((0.0, -6.4, -2.0), (12.8, 6.4, 4.4), (32, 32, 16))
CORRIDOR_BOUNDS = VoxelBounds((0.0, -25.6, -2.0), (51.2, 25.6, 4.4), (128, 128, 16))


def make_oov_scenario(frame_count=4, speed=4.0, seed=0, intrinsics=None,
                      box_class=1, ground_class=2):
    """Forward-motion sequence with a side box that every historical frame
    sees in full while the current frame cannot see it at all; both
    conditions are verified analytically before the spec is returned.

    The box is inset 0.01 m from 0.4 m voxel lines so its surface points
    land in exactly the cells whose centers it contains.
    """
    if speed <= 0:
        raise ValueError("the scenario needs forward motion; the box can never leave view")
    if frame_count < 2:
        raise ValueError("need at least one historical frame")
    intr = intrinsics or DEFAULT_INTRINSICS
    current_x = speed * (frame_count - 1)
    box = BoxPrimitive(
        class_id=box_class,
        min_corner=(current_x + 0.41, 2.01, -1.59),
        max_corner=(current_x + 1.19, 2.79, -1.21),
    )
    ground = GroundPlane(class_id=ground_class, height=-1.8, thickness=0.2)
    spec = SceneSpec(
        boxes=[box], planes=[ground], intrinsics=intr,
        frame_count=frame_count, speed=speed, seed=seed,
    )
    current = frame_count - 1
    if not box_fully_hidden(spec, box, current):
        raise ValueError("infeasible geometry: side box still intersects the current frustum")
    for scan in range(frame_count - 1):
        if not box_fully_visible(spec, box, scan):
            raise ValueError(
                f"infeasible geometry: side box not fully visible at scan {scan}"
            )
    return spec


def make_corridor_scenario(frame_count=6, speed=4.0, seed=0, intrinsics=None):
    """Long corridor (ground plane + side walls + pillars) for coverage-trend
    and throughput tests; every frame sees the same static scene."""
    if speed <= 0:
        raise ValueError("corridor scenario needs forward motion")
    intr = intrinsics or DEFAULT_INTRINSICS
    far = speed * frame_count + 260.0
    boxes = [
        BoxPrimitive(3, (-10.0, 5.8, -1.8), (far, 6.2, 1.0)),
        BoxPrimitive(4, (-10.0, -6.2, -1.8), (far, -5.8, 1.0)),
    ]
    for i in range(6):
        x0 = 12.0 + 18.0 * i
        side = 3.0 if i % 2 == 0 else -3.4
        boxes.append(BoxPrimitive(5, (x0, side, -1.8), (x0 + 0.8, side + 0.8, 0.2)))
    planes = [GroundPlane(1, height=-1.8, thickness=0.2)]
    return SceneSpec(
        boxes=boxes, planes=planes, intrinsics=intr,
        frame_count=frame_count, speed=speed, seed=seed,
    )


TEMPLATES = {
    "oov-car": (make_oov_scenario, OOV_BOUNDS),
    "corridor": (make_corridor_scenario, CORRIDOR_BOUNDS),
}
