#!/usr/bin/env python3
"""Timing comparison of the compiled and pure-numpy kernel backends.

Run:  python benchmarks/bench_kernels.py [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from hactnet import _kernels_np

try:
    from hactnet import _kernels_cy
except ImportError:
    _kernels_cy = None


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases():
    rng = np.random.default_rng(0)
    h, w, k = 256, 256, 256
    l = rng.uniform(0, 100, (h, w))
    a = rng.uniform(-30, 30, (h, w))
    b = rng.uniform(-30, 30, (h, w))
    cl = rng.uniform(0, 100, k)
    ca = rng.uniform(-30, 30, k)
    cb = rng.uniform(-30, 30, k)
    cx = rng.uniform(0, w, k)
    cy = rng.uniform(0, h, k)
    yield "slic_assign 256x256, 256 centers", lambda m: m.slic_assign(
        l, a, b, cl, ca, cb, cx, cy, 32, 0.4
    )

    quant = rng.integers(0, 8, (512, 512))
    mask = (rng.random((512, 512)) > 0.25).astype(np.uint8)
    yield "glcm_counts 512x512, 8 levels", lambda m: m.glcm_counts(quant, mask, 8)

    labels = rng.integers(0, 300, (512, 512))
    yield "region_adjacency 512x512, 300 regions", lambda m: m.region_adjacency(labels, 300)

    x = rng.uniform(0, 2000, 5000)
    y = rng.uniform(0, 2000, 5000)
    yield "grid_knn_select 5000 points, k=5", lambda m: m.grid_knn_select(x, y, 5, 50.0)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    print(f"{'kernel':<42}{'numpy':>10}{'cython':>10}{'speedup':>9}")
    for name, call in cases():
        t_np = timeit(lambda: call(_kernels_np), args.repeats)
        if _kernels_cy is None:
            print(f"{name:<42}{t_np * 1e3:>8.2f}ms{'n/a':>10}{'-':>9}")
            continue
        t_cy = timeit(lambda: call(_kernels_cy), args.repeats)
        out_np, out_cy = call(_kernels_np), call(_kernels_cy)
        first_np = out_np[0] if isinstance(out_np, tuple) else out_np
        first_cy = out_cy[0] if isinstance(out_cy, tuple) else out_cy
        tag = "" if np.array_equal(first_np, first_cy) else "  (MISMATCH)"
        print(f"{name:<42}{t_np * 1e3:>8.2f}ms{t_cy * 1e3:>8.2f}ms{t_np / t_cy:>8.1f}x{tag}")


if __name__ == "__main__":
    main()
