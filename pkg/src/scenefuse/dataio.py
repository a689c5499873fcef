"""Readers and writers for KITTI-style sequence data and portable containers.

Formats:
    calib.txt         "P2:" and "Tr:" keys, 12 floats each (row-major 3x4).
    poses.txt         12 floats per line, row-major 3x4, world<-camera.
    depth PNG         16-bit single channel; meters = raw / 256, raw 0 invalid.
    label grids       ".label" u16 little-endian ids + ".invalid" bit-packed
                      MSB-first, flat index x*(Y*Z) + y*Z + z.
    PLY               ASCII point cloud with feature scalars and origin tag.
    tensor files      8-byte LE header length, JSON header {dims, dtype,
                      order}, then the raw little-endian payload.
"""

import io
import json
import logging
import struct

import numpy as np
from PIL import Image

from .geometry import CameraIntrinsics, RigidTransform
from .metrics import LabelGrid

log = logging.getLogger(__name__)

POSE_DRIFT_WARN = 1e-6
_ORTHO_FIX_TOL = 1e-12


class FormatError(ValueError):
    """Malformed input data; the message carries location context."""


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------

class CalibSet:
    """Projection matrix, camera<-lidar transform, and derived intrinsics.

    `camera_from_lidar()` composes the rectified-camera baseline offset
    hidden in the projection's fourth column with the raw Tr transform, so
    points lifted in the rectified camera frame can be mapped to the lidar-
    aligned ego frame with its inverse.
    """

    def __init__(self, projection, cam_from_lidar, intrinsics):
        self.projection = projection
        self.cam_from_lidar = cam_from_lidar
        self.intrinsics = intrinsics

    def camera_offset(self):
        k = self.intrinsics.matrix()
        return np.linalg.solve(k, self.projection[:, 3])

    def camera_from_lidar(self):
        offset = RigidTransform(np.eye(3), self.camera_offset())
        return offset.compose(self.cam_from_lidar)


def _parse_float_line(tag, line, lineno, count):
    parts = line.split()
    if len(parts) != count:
        raise FormatError(
            f"line {lineno}: '{tag}' expects {count} floats, found {len(parts)}"
        )
    try:
        values = [float(p) for p in parts]
    except ValueError as exc:
        raise FormatError(f"line {lineno}: '{tag}' has a non-numeric entry: {exc}") from None
    if not all(np.isfinite(values)):
        raise FormatError(f"line {lineno}: '{tag}' contains non-finite values")
    return np.array(values)


def parse_calib(text, width=1226, height=370):
    """Parse a KITTI-style calib.txt. Image size is not stored in the file;
    callers should pass the size of the depth maps they will use."""
    found = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or ":" not in line:
            continue
        key, _, rest = line.partition(":")
        key = key.strip()
        if key in ("P2", "Tr"):
            found[key] = _parse_float_line(key, rest, lineno, 12)
    for key in ("P2", "Tr"):
        if key not in found:
            raise FormatError(f"calibration is missing required key '{key}'")
    proj = found["P2"].reshape(3, 4)
    if proj[0, 0] <= 0 or proj[1, 1] <= 0:
        raise FormatError("P2 focal entries must be positive")
    intr = CameraIntrinsics(
        fx=proj[0, 0], fy=proj[1, 1], cx=proj[0, 2], cy=proj[1, 2],
        width=width, height=height,
    )
    tr = found["Tr"].reshape(3, 4)
    cam_from_lidar = RigidTransform(_nearest_rotation(tr[:, :3]), tr[:, 3])
    return CalibSet(proj, cam_from_lidar, intr)


# ---------------------------------------------------------------------------
# poses
# ---------------------------------------------------------------------------

class PoseTrack:
    """Ordered world<-camera poses, one per scan index starting at 0."""

    def __init__(self, poses):
        poses = list(poses)
        if not poses:
            raise ValueError("pose track must hold at least one pose")
        self.poses = poses

    def __len__(self):
        return len(self.poses)

    def __getitem__(self, i):
        return self.poses[i]


def _nearest_rotation(m):
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def parse_poses(text):
    poses = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        values = _parse_float_line("pose", line, lineno, 12).reshape(3, 4)
        r = values[:, :3]
        drift = np.abs(r.T @ r - np.eye(3)).max()
        if drift > POSE_DRIFT_WARN:
            log.warning("line %d: rotation drift %.2e, re-orthonormalizing", lineno, drift)
        if drift > _ORTHO_FIX_TOL:
            r = _nearest_rotation(r)
        poses.append(RigidTransform(r, values[:, 3]))
    if not poses:
        raise FormatError("pose file contains no poses")
    return PoseTrack(poses)


def format_poses(track):
    lines = []
    for pose in track.poses:
        m = np.hstack([pose.rotation, pose.translation[:, None]])
        lines.append(" ".join(f"{v:.12e}" for v in m.ravel()))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# depth maps
# ---------------------------------------------------------------------------

def read_depth_png(data):
    """Decode a 16-bit depth PNG: meters = raw / 256, raw 0 -> NaN."""
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise FormatError(f"not a decodable PNG image: {exc}") from None
    if img.mode not in ("I", "I;16", "I;16B", "I;16L"):
        raise FormatError(f"depth PNG must be 16-bit single channel, got mode '{img.mode}'")
    raw = np.asarray(img, dtype=np.uint32)
    if raw.ndim != 2:
        raise FormatError(f"depth PNG must be single channel, got shape {raw.shape}")
    depth = raw.astype(np.float64) / 256.0
    depth[raw == 0] = np.nan
    return depth


def write_depth_png(depth):
    depth = np.asarray(depth, dtype=np.float64)
    raw = np.where(np.isfinite(depth) & (depth > 0), np.round(depth * 256.0), 0.0)
    raw = np.clip(raw, 0, 65535).astype(np.uint16)
    img = Image.fromarray(raw.astype(np.int32), mode="I").convert("I;16")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# voxel label grids
# ---------------------------------------------------------------------------

def read_label_grid(label_bytes, invalid_bytes, dims=(256, 256, 32)):
    x, y, z = dims
    n = x * y * z
    if len(label_bytes) != 2 * n:
        raise FormatError(
            f"label payload must be {2 * n} bytes for dims {dims}, got {len(label_bytes)}"
        )
    packed = (n + 7) // 8
    if len(invalid_bytes) != packed:
        raise FormatError(
            f"invalid payload must be {packed} bytes for dims {dims}, got {len(invalid_bytes)}"
        )
    labels = np.frombuffer(label_bytes, dtype="<u2").reshape(dims)
    bits = np.unpackbits(np.frombuffer(invalid_bytes, dtype=np.uint8))[:n]
    invalid = bits.astype(bool).reshape(dims)
    return LabelGrid(labels.copy(), invalid)


def write_label_grid(grid):
    labels = np.ascontiguousarray(grid.labels, dtype="<u2")
    invalid = np.packbits(grid.invalid.astype(np.uint8).ravel())
    return labels.tobytes(), invalid.tobytes()


# ---------------------------------------------------------------------------
# PLY export
# ---------------------------------------------------------------------------

def write_ply(cloud, channel_limit=4):
    """ASCII PLY with x/y/z, up to channel_limit feature scalars, and the
    origin tag; intended for quick inspection in external viewers."""
    k = min(cloud.channels, int(channel_limit))
    header = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}"]
    header += ["property double x", "property double y", "property double z"]
    header += [f"property float f{i}" for i in range(k)]
    header += ["property int origin", "end_header"]
    lines = ["\n".join(header)]
    for i in range(len(cloud)):
        x, y, z = cloud.positions[i]
        parts = [f"{x:g}", f"{y:g}", f"{z:g}"]
        parts += [f"{cloud.features[i, c]:g}" for c in range(k)]
        parts.append(str(int(cloud.origin[i])))
        lines.append(" ".join(parts))
    return ("\n".join(lines) + "\n").encode("ascii")


# ---------------------------------------------------------------------------
# tensor container
# ---------------------------------------------------------------------------

DTYPE_TAGS = {
    "f32": "<f4",
    "f64": "<f8",
    "u8": "|u1",
    "u16": "<u2",
    "i32": "<i4",
    "i64": "<i8",
}
_NUMPY_TO_TAG = {np.dtype(v): k for k, v in DTYPE_TAGS.items()}


def write_tensor(array, order):
    """Serialize an array with an explicit axis-order string (e.g. "HWC")."""
    array = np.ascontiguousarray(array)
    tag = _NUMPY_TO_TAG.get(array.dtype.newbyteorder("<"))
    if tag is None:
        raise FormatError(f"unsupported tensor dtype {array.dtype}")
    payload = array.astype(DTYPE_TAGS[tag], copy=False).tobytes()
    header = json.dumps(
        {"dims": list(array.shape), "dtype": tag, "order": order},
        sort_keys=True,
    ).encode("utf-8")
    return struct.pack("<Q", len(header)) + header + payload


def read_tensor(data):
    """Inverse of write_tensor; returns (array, order)."""
    if len(data) < 8:
        raise FormatError("tensor file shorter than its length prefix")
    (hlen,) = struct.unpack("<Q", data[:8])
    if len(data) < 8 + hlen:
        raise FormatError("tensor header extends past end of data")
    try:
        header = json.loads(data[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"tensor header is not valid JSON: {exc}") from None
    for key in ("dims", "dtype", "order"):
        if key not in header:
            raise FormatError(f"tensor header is missing '{key}'")
    if header["dtype"] not in DTYPE_TAGS:
        raise FormatError(f"unknown tensor dtype tag '{header['dtype']}'")
    dims = tuple(int(d) for d in header["dims"])
    dtype = np.dtype(DTYPE_TAGS[header["dtype"]])
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    payload = data[8 + hlen :]
    if len(payload) != expected:
        raise FormatError(
            f"tensor payload is {len(payload)} bytes, header dims {dims} imply {expected}"
        )
    array = np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
    return array, header["order"]


def save_tensor(path, array, order):
    with open(path, "wb") as fh:
        fh.write(write_tensor(array, order))


def load_tensor(path):
    with open(path, "rb") as fh:
        return read_tensor(fh.read())
