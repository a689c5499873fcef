"""Benchmark the numba kernels against their pure-numpy fallbacks.

Usage:
    python benchmarks/bench_kernels.py [--repeat N]

Each hot kernel runs on a realistic workload size with both backends and
the best-of-N wall time is reported. Invoking with SCENEFUSE_NO_NUMBA=1
only exercises the numpy column (the numba one is reported as absent).
"""

import argparse
import time

import numpy as np

from scenefuse import _kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def bench_resize2d(rng):
    src = rng.standard_normal((370, 1226, 8)).astype(np.float32)
    y0, y1, wy = _kernels.axis_taps(370, 740)
    x0, x1, wx = _kernels.axis_taps(1226, 2452)
    return {
        "numba": (lambda: _kernels._resize2d_numba(src, y0, y1, wy, x0, x1, wx)),
        "numpy": (lambda: _kernels._resize2d_numpy(src, y0, y1, wy, x0, x1, wx)),
    }


def bench_resize3d(rng):
    src = rng.standard_normal((128, 128, 16, 8)).astype(np.float32)
    x0, x1, wx = _kernels.axis_taps(128, 256)
    y0, y1, wy = _kernels.axis_taps(128, 256)
    z0, z1, wz = _kernels.axis_taps(16, 32)
    return {
        "numba": (lambda: _kernels._resize3d_numba(src, x0, x1, wx, y0, y1, wy,
                                                   z0, z1, wz)),
        "numpy": (lambda: _kernels._resize3d_numpy(src, x0, x1, wx, y0, y1, wy,
                                                   z0, z1, wz)),
    }


def bench_scatter(rng):
    n, v, c = 3_000_000, 128 * 128 * 16, 8
    idx = rng.integers(0, v, size=n).astype(np.int64)
    feats = rng.standard_normal((n, c)).astype(np.float32)
    return {
        "numba": (lambda: _kernels._scatter_add_numba(idx, feats, v)),
        "numpy": (lambda: _kernels._scatter_add_numpy(idx, feats, v)),
    }


def bench_raycast(rng):
    origin = np.array([0.0, 0.0, 0.0])
    h, w = 370, 1226
    d = np.empty((h, w, 3))
    d[..., 0] = np.linspace(-0.85, 0.85, w)[None, :]
    d[..., 1] = np.linspace(-0.26, 0.26, h)[:, None]
    d[..., 2] = 1.0
    lo = rng.uniform(-30, 30, size=(10, 3))
    boxes = np.hstack([lo, lo + rng.uniform(1, 10, size=(10, 3))])
    box_cls = np.arange(1, 11, dtype=np.int32)
    plane_h = np.array([-1.8])
    plane_cls = np.array([11], dtype=np.int32)
    return {
        "numba": (lambda: _kernels._raycast_numba(origin, d, boxes, box_cls,
                                                  plane_h, plane_cls)),
        "numpy": (lambda: _kernels._raycast_numpy(origin, d, boxes, box_cls,
                                                  plane_h, plane_cls)),
    }


BENCHES = {
    "bilinear resize 370x1226x8 -> x2": bench_resize2d,
    "trilinear resize 128x128x16x8 -> x2": bench_resize3d,
    "scatter-add 3M points x 8ch": bench_scatter,
    "raycast 370x1226, 11 primitives": bench_raycast,
}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    _kernels.warmup()
    print(f"active backend: {_kernels.backend()}\n")
    header = f"{'kernel':<38} {'numba':>10} {'numpy':>10} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, builder in BENCHES.items():
        variants = builder(rng)
        t_numpy = best_of(variants["numpy"], args.repeat)
        if _kernels.HAVE_NUMBA:
            variants["numba"]()  # compile outside the timer
            t_numba = best_of(variants["numba"], args.repeat)
            print(f"{name:<38} {t_numba * 1e3:>8.1f}ms {t_numpy * 1e3:>8.1f}ms "
                  f"{t_numpy / t_numba:>8.1f}x")
        else:
            print(f"{name:<38} {'n/a':>10} {t_numpy * 1e3:>8.1f}ms {'':>9}")


if __name__ == "__main__":
    main()
