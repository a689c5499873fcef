"""Bilinear/trilinear resampling and min-max normalization.

All resizing uses half-pixel-center sampling: the source coordinate for
output index d is (d + 0.5) * (in / out) - 0.5, clamped to [0, in - 1],
blended from the 2/4/8 nearest taps. NaN values propagate through the
blend, so interpolating near invalid pixels yields invalid outputs.

Planes are (H, W) or (H, W, C) arrays; volumes are (X, Y, Z) or
(X, Y, Z, C). Channel dimension is resampled independently and the input
dtype is preserved (arithmetic runs in float64).
"""

import numpy as np

from . import _kernels


def bilinear_resize(src, out_h, out_w):
    """Resize a plane to (out_h, out_w). Same-size calls return an exact copy."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be at least 1x1, got {out_h}x{out_w}")
    src = np.asarray(src)
    if src.ndim not in (2, 3):
        raise ValueError(f"expected (H, W) or (H, W, C) array, got shape {src.shape}")
    squeeze = src.ndim == 2
    data = src[:, :, None] if squeeze else src
    h, w = data.shape[:2]
    if (out_h, out_w) == (h, w):
        return src.copy()
    native = src.dtype in (np.float32, np.float64)
    work = np.ascontiguousarray(data, dtype=data.dtype if native else np.float64)
    y0, y1, wy = _kernels.axis_taps(h, out_h)
    x0, x1, wx = _kernels.axis_taps(w, out_w)
    out = _kernels.resize2d(work, y0, y1, wy, x0, x1, wx)
    out = out.astype(src.dtype, copy=False)
    return out[:, :, 0] if squeeze else out


def trilinear_resize(src, out_dims):
    """Resize a volume to out_dims = (X, Y, Z) with the same half-pixel rule."""
    ox, oy, oz = (int(d) for d in out_dims)
    if ox < 1 or oy < 1 or oz < 1:
        raise ValueError(f"output dims must be at least 1, got {(ox, oy, oz)}")
    src = np.asarray(src)
    if src.ndim not in (3, 4):
        raise ValueError(f"expected (X, Y, Z) or (X, Y, Z, C) array, got shape {src.shape}")
    squeeze = src.ndim == 3
    data = src[:, :, :, None] if squeeze else src
    if (ox, oy, oz) == data.shape[:3]:
        return src.copy()
    native = src.dtype in (np.float32, np.float64)
    work = np.ascontiguousarray(data, dtype=data.dtype if native else np.float64)
    x0, x1, wx = _kernels.axis_taps(data.shape[0], ox)
    y0, y1, wy = _kernels.axis_taps(data.shape[1], oy)
    z0, z1, wz = _kernels.axis_taps(data.shape[2], oz)
    out = _kernels.resize3d(work, x0, x1, wx, y0, y1, wy, z0, z1, wz)
    out = out.astype(src.dtype, copy=False)
    return out[:, :, :, 0] if squeeze else out


def minmax_normalize(src):
    """Map finite values to [0, 1] via (x - min) / (max - min).

    Statistics are computed over finite elements only; non-finite elements
    stay NaN in the output. A constant map normalizes to all zeros.
    """
    src = np.asarray(src, dtype=np.float64)
    valid = np.isfinite(src)
    if not valid.any():
        raise ValueError("min-max normalization needs at least one finite element")
    lo = src[valid].min()
    hi = src[valid].max()
    out = np.full(src.shape, np.nan)
    if hi == lo:
        out[valid] = 0.0
    else:
        out[valid] = (src[valid] - lo) / (hi - lo)
    return out
