"""Hot numeric kernels: numba @njit implementations with pure-numpy fallbacks.

The numba path is used whenever numba imports cleanly; set the environment
variable ``SCENEFUSE_NO_NUMBA=1`` to force the numpy fallback. Both paths
evaluate the same arithmetic expressions in the same order, so for the
serial kernels the two backends agree bit-for-bit.

Each kernel exists as a ``*_numba`` and a ``*_numpy`` variant (both always
importable; the benchmark drives them directly) plus a dispatching wrapper
that honours the selected backend.
"""

import os

import numpy as np

_env = os.environ.get("SCENEFUSE_NO_NUMBA", "")
NUMBA_DISABLED = _env not in ("", "0")

try:
    if NUMBA_DISABLED:
        raise ImportError("numba disabled via SCENEFUSE_NO_NUMBA")
    from numba import njit, prange, get_num_threads, set_num_threads

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):  # decorator stub so the numba defs still parse
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

    def prange(n):
        return range(n)

    def get_num_threads():
        return 1

    def set_num_threads(n):
        pass


def backend():
    return "numba" if HAVE_NUMBA else "numpy"


def set_threads(n):
    """Clamp the requested worker count to what the host allows."""
    if not HAVE_NUMBA:
        return 1
    n = max(1, min(int(n), _max_threads()))
    set_num_threads(n)
    return n


def _max_threads():
    if not HAVE_NUMBA:
        return 1
    import numba

    return numba.config.NUMBA_NUM_THREADS


# ---------------------------------------------------------------------------
# separable resize, half-pixel-center sampling
# ---------------------------------------------------------------------------

def axis_taps(n_in, n_out):
    """Per-output-sample source taps for one axis.

    Source coordinate s = (d + 0.5) * (n_in / n_out) - 0.5, clamped to
    [0, n_in - 1]; returns (lo index, hi index, hi weight) arrays.
    """
    s = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    np.clip(s, 0.0, float(n_in - 1), out=s)
    i0 = np.floor(s).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    w = s - i0
    return i0, i1, w


@njit(parallel=True, cache=True)
def _resize2d_numba(src, y0, y1, wy, x0, x1, wx):
    # per-element arithmetic promotes to float64; the final store rounds
    # back to the source dtype, matching the numpy fallback bit-for-bit
    oh = y0.shape[0]
    ow = x0.shape[0]
    nc = src.shape[2]
    out = np.empty((oh, ow, nc), dtype=src.dtype)
    for r in prange(oh):
        a = y0[r]
        b = y1[r]
        fy = wy[r]
        for c in range(ow):
            lo = x0[c]
            hi = x1[c]
            fx = wx[c]
            for k in range(nc):
                top = (1.0 - fx) * src[a, lo, k] + fx * src[a, hi, k]
                bot = (1.0 - fx) * src[b, lo, k] + fx * src[b, hi, k]
                out[r, c, k] = (1.0 - fy) * top + fy * bot
    return out


def _resize2d_numpy(src, y0, y1, wy, x0, x1, wx, block=128):
    # row-blocked to bound temporary size; elementwise math is unchanged,
    # so the result stays bit-identical to the unblocked form
    fx = wx[None, :, None]
    out = np.empty((y0.shape[0], x0.shape[0], src.shape[2]), dtype=src.dtype)
    for r in range(0, y0.shape[0], block):
        ys0 = y0[r:r + block]
        ys1 = y1[r:r + block]
        fy = wy[r:r + block, None, None]
        top = (1.0 - fx) * src[np.ix_(ys0, x0)] + fx * src[np.ix_(ys0, x1)]
        bot = (1.0 - fx) * src[np.ix_(ys1, x0)] + fx * src[np.ix_(ys1, x1)]
        out[r:r + block] = (1.0 - fy) * top + fy * bot
    return out


def resize2d(src, y0, y1, wy, x0, x1, wx):
    if HAVE_NUMBA:
        return _resize2d_numba(src, y0, y1, wy, x0, x1, wx)
    return _resize2d_numpy(src, y0, y1, wy, x0, x1, wx)


@njit(parallel=True, cache=True)
def _resize3d_numba(src, x0, x1, wx, y0, y1, wy, z0, z1, wz):
    ox = x0.shape[0]
    oy = y0.shape[0]
    oz = z0.shape[0]
    nc = src.shape[3]
    out = np.empty((ox, oy, oz, nc), dtype=src.dtype)
    for i in prange(ox):
        a0 = x0[i]
        a1 = x1[i]
        fx = wx[i]
        for j in range(oy):
            b0 = y0[j]
            b1 = y1[j]
            fy = wy[j]
            for k in range(oz):
                c0 = z0[k]
                c1 = z1[k]
                fz = wz[k]
                for ch in range(nc):
                    e00 = (1.0 - fz) * src[a0, b0, c0, ch] + fz * src[a0, b0, c1, ch]
                    e01 = (1.0 - fz) * src[a0, b1, c0, ch] + fz * src[a0, b1, c1, ch]
                    e10 = (1.0 - fz) * src[a1, b0, c0, ch] + fz * src[a1, b0, c1, ch]
                    e11 = (1.0 - fz) * src[a1, b1, c0, ch] + fz * src[a1, b1, c1, ch]
                    f0 = (1.0 - fy) * e00 + fy * e01
                    f1 = (1.0 - fy) * e10 + fy * e11
                    out[i, j, k, ch] = (1.0 - fx) * f0 + fx * f1
    return out


def _resize3d_numpy(src, x0, x1, wx, y0, y1, wy, z0, z1, wz, block=16):
    out = np.empty((x0.shape[0], y0.shape[0], z0.shape[0], src.shape[3]),
                   dtype=src.dtype)
    fy = wy[None, :, None, None]
    fz = wz[None, None, :, None]

    def gather(a, b, c):
        return src[np.ix_(a, b, c)]

    for i in range(0, x0.shape[0], block):
        xs0 = x0[i:i + block]
        xs1 = x1[i:i + block]
        fx = wx[i:i + block, None, None, None]
        e00 = (1.0 - fz) * gather(xs0, y0, z0) + fz * gather(xs0, y0, z1)
        e01 = (1.0 - fz) * gather(xs0, y1, z0) + fz * gather(xs0, y1, z1)
        e10 = (1.0 - fz) * gather(xs1, y0, z0) + fz * gather(xs1, y0, z1)
        e11 = (1.0 - fz) * gather(xs1, y1, z0) + fz * gather(xs1, y1, z1)
        f0 = (1.0 - fy) * e00 + fy * e01
        f1 = (1.0 - fy) * e10 + fy * e11
        out[i:i + block] = (1.0 - fx) * f0 + fx * f1
    return out


def resize3d(src, x0, x1, wx, y0, y1, wy, z0, z1, wz):
    if HAVE_NUMBA:
        return _resize3d_numba(src, x0, x1, wx, y0, y1, wy, z0, z1, wz)
    return _resize3d_numpy(src, x0, x1, wx, y0, y1, wy, z0, z1, wz)


# ---------------------------------------------------------------------------
# voxel scatter-add
# ---------------------------------------------------------------------------

@njit(cache=True)
def _scatter_add_numba(flat_idx, feats, n_voxels):
    nc = feats.shape[1]
    out = np.zeros((n_voxels, nc), dtype=np.float32)
    for i in range(flat_idx.shape[0]):
        v = flat_idx[i]
        for c in range(nc):
            out[v, c] += feats[i, c]
    return out


def _scatter_add_numpy(flat_idx, feats, n_voxels):
    out = np.zeros((n_voxels, feats.shape[1]), dtype=np.float32)
    np.add.at(out, flat_idx, feats)
    return out


def scatter_add(flat_idx, feats, n_voxels):
    """Ordered (point-index order) feature accumulation; deterministic."""
    if HAVE_NUMBA:
        return _scatter_add_numba(flat_idx, feats, n_voxels)
    return _scatter_add_numpy(flat_idx, feats, n_voxels)


@njit(parallel=True, cache=True)
def _scatter_add_sharded_numba(flat_idx, feats, n_voxels, n_shards):
    n = flat_idx.shape[0]
    nc = feats.shape[1]
    partial = np.zeros((n_shards, n_voxels, nc), dtype=np.float32)
    for s in prange(n_shards):
        start = s * n // n_shards
        stop = (s + 1) * n // n_shards
        for i in range(start, stop):
            v = flat_idx[i]
            for c in range(nc):
                partial[s, v, c] += feats[i, c]
    out = np.zeros((n_voxels, nc), dtype=np.float32)
    for s in range(n_shards):
        out += partial[s]
    return out


def scatter_add_sharded(flat_idx, feats, n_voxels, n_shards):
    """Sharded accumulation merged by addition; agrees with scatter_add
    to float32 round-off, not bit-for-bit."""
    if HAVE_NUMBA and n_shards > 1:
        return _scatter_add_sharded_numba(flat_idx, feats, n_voxels, n_shards)
    return scatter_add(flat_idx, feats, n_voxels)


# ---------------------------------------------------------------------------
# analytic ray casting (axis-aligned boxes + horizontal planes)
# ---------------------------------------------------------------------------

_RAY_EPS = 1e-9


@njit(cache=True, parallel=True)
def _raycast_numba(origin, dirs, boxes, box_cls, plane_h, plane_cls):
    h = dirs.shape[0]
    w = dirs.shape[1]
    depth = np.full((h, w), np.nan)
    cls = np.zeros((h, w), dtype=np.int32)
    ox = origin[0]
    oy = origin[1]
    oz = origin[2]
    for r in prange(h):
        for c in range(w):
            dx = dirs[r, c, 0]
            dy = dirs[r, c, 1]
            dz = dirs[r, c, 2]
            best = np.inf
            best_cls = 0
            for b in range(boxes.shape[0]):
                tmin = -np.inf
                tmax = np.inf
                ok = True
                for ax in range(3):
                    if ax == 0:
                        d = dx
                        o = ox
                    elif ax == 1:
                        d = dy
                        o = oy
                    else:
                        d = dz
                        o = oz
                    lo = boxes[b, ax]
                    hi = boxes[b, 3 + ax]
                    if d == 0.0:
                        if o < lo or o > hi:
                            ok = False
                            break
                    else:
                        t1 = (lo - o) / d
                        t2 = (hi - o) / d
                        if t1 > t2:
                            t1, t2 = t2, t1
                        if t1 > tmin:
                            tmin = t1
                        if t2 < tmax:
                            tmax = t2
                if ok and tmax >= tmin and tmax > _RAY_EPS:
                    s = tmin if tmin > _RAY_EPS else tmax
                    if s < best:
                        best = s
                        best_cls = box_cls[b]
            for p in range(plane_h.shape[0]):
                if dz != 0.0:
                    s = (plane_h[p] - oz) / dz
                    if s > _RAY_EPS and s < best:
                        best = s
                        best_cls = plane_cls[p]
            if best < np.inf:
                depth[r, c] = best
                cls[r, c] = best_cls
    return depth, cls


def _raycast_numpy(origin, dirs, boxes, box_cls, plane_h, plane_cls):
    h, w = dirs.shape[:2]
    best = np.full((h, w), np.inf)
    cls = np.zeros((h, w), dtype=np.int32)
    for b in range(boxes.shape[0]):
        tmin = np.full((h, w), -np.inf)
        tmax = np.full((h, w), np.inf)
        ok = np.ones((h, w), dtype=bool)
        for ax in range(3):
            d = dirs[:, :, ax]
            o = origin[ax]
            lo, hi = boxes[b, ax], boxes[b, 3 + ax]
            zero = d == 0.0
            safe = np.where(zero, 1.0, d)
            t1 = (lo - o) / safe
            t2 = (hi - o) / safe
            t_near = np.minimum(t1, t2)
            t_far = np.maximum(t1, t2)
            ok &= ~(zero & ((o < lo) | (o > hi)))
            t_near = np.where(zero, -np.inf, t_near)
            t_far = np.where(zero, np.inf, t_far)
            tmin = np.maximum(tmin, t_near)
            tmax = np.minimum(tmax, t_far)
        hit = ok & (tmax >= tmin) & (tmax > _RAY_EPS)
        s = np.where(tmin > _RAY_EPS, tmin, tmax)
        take = hit & (s < best)
        best = np.where(take, s, best)
        cls = np.where(take, np.int32(box_cls[b]), cls)
    for p in range(plane_h.shape[0]):
        dz = dirs[:, :, 2]
        nonpar = dz != 0.0
        safe = np.where(nonpar, dz, 1.0)
        s = (plane_h[p] - origin[2]) / safe
        take = nonpar & (s > _RAY_EPS) & (s < best)
        best = np.where(take, s, best)
        cls = np.where(take, np.int32(plane_cls[p]), cls)
    depth = np.where(np.isinf(best), np.nan, best)
    cls = np.where(np.isinf(best), np.int32(0), cls)
    return depth, cls


def raycast(origin, dirs, boxes, box_cls, plane_h, plane_cls):
    if HAVE_NUMBA:
        return _raycast_numba(origin, dirs, boxes, box_cls, plane_h, plane_cls)
    return _raycast_numpy(origin, dirs, boxes, box_cls, plane_h, plane_cls)


def warmup():
    """Compile the numba kernels on tiny inputs (no-op on the numpy path)."""
    if not HAVE_NUMBA:
        return
    i0, i1, wgt = axis_taps(2, 3)
    for dt in (np.float64, np.float32):
        src2 = np.zeros((2, 2, 1), dtype=dt)
        _resize2d_numba(src2, i0, i1, wgt, i0, i1, wgt)
        src3 = np.zeros((2, 2, 2, 1), dtype=dt)
        _resize3d_numba(src3, i0, i1, wgt, i0, i1, wgt, i0, i1, wgt)
    idx = np.zeros(4, dtype=np.int64)
    fts = np.zeros((4, 2), dtype=np.float32)
    _scatter_add_numba(idx, fts, 2)
    _scatter_add_sharded_numba(idx, fts, 2, 2)
    o = np.zeros(3)
    d = np.zeros((1, 1, 3))
    d[..., 2] = 1.0
    bx = np.array([[-1.0, -1.0, 1.0, 1.0, 1.0, 2.0]])
    _raycast_numba(o, d, bx, np.array([1], dtype=np.int32),
                   np.array([5.0]), np.array([2], dtype=np.int32))
