"""Compare the compiled kernel lane against the pure-numpy fallback.

Runs the hot kernels (separable blur, 2-D blur, glass shuffle, fused
paint-blend) in both lanes on realistic shapes, reports wall-clock medians,
and verifies the lanes agree bit-for-bit.

Usage: python benchmarks/bench_kernels.py [--size 512] [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from segrobust import kernels
from segrobust.seeding import make_rng


def _median_time(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return sorted(times)[len(times) // 2]


def build_cases(size: int):
    rng = make_rng(7)
    img = rng.random((size, size, 3))
    u8 = (img * 255).astype(np.uint8)
    ids = rng.integers(0, 19, (size, size), dtype=np.uint8)
    lut = rng.integers(0, 256, (256, 3), dtype=np.uint8)
    w = np.exp(-np.linspace(-3, 3, 19) ** 2 / 2)
    w /= w.sum()
    kern2d = np.outer(w[::2], w[::2])
    kern2d /= kern2d.sum()
    dy = rng.integers(-2, 3, (2, size, size)).astype(np.int64)
    dx = rng.integers(-2, 3, (2, size, size)).astype(np.int64)
    # trainer-shaped batch for the conv lowering kernels: size**2 total pixels
    # keeps the workload comparable to the image cases above
    side = max(size // 8, 8)
    feat = rng.random((64, side, side, 16))
    dcol = rng.random((64 * side * side, 9 * 16))
    return {
        "correlate_sep 19-tap": lambda: kernels.correlate_sep(img, w),
        "correlate2d 10x10": lambda: kernels.correlate2d(img, kern2d),
        "glass_shuffle 2-iter": lambda: kernels.glass_shuffle(img.copy(), dy, dx),
        "paint_blend": lambda: kernels.paint_blend(u8, ids, lut, 0.8),
        "im2col3x3 64x16ch": lambda: kernels.im2col3x3(feat),
        "col2im3x3 64x16ch": lambda: kernels.col2im3x3(dcol, 64, side, side, 16),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=512, help="image side length in pixels")
    ap.add_argument("--repeats", type=int, default=5, help="timed repetitions per kernel")
    args = ap.parse_args()

    if not kernels.NUMBA_AVAILABLE:
        raise SystemExit("numba is not importable; nothing to compare against")

    cases = build_cases(args.size)
    print(f"image {args.size}x{args.size}, median of {args.repeats} runs\n")
    print(f"{'kernel':<22} {'numba':>10} {'numpy':>10} {'speedup':>8}  bit-equal")

    for name, fn in cases.items():
        kernels.set_lane(True)
        fn()  # JIT warmup outside the timed region
        t_numba = _median_time(fn, args.repeats)
        out_numba = fn()
        kernels.set_lane(False)
        t_numpy = _median_time(fn, args.repeats)
        out_numpy = fn()
        kernels.set_lane(True)
        same = np.array_equal(np.asarray(out_numba), np.asarray(out_numpy))
        print(
            f"{name:<22} {t_numba * 1e3:>8.2f}ms {t_numpy * 1e3:>8.2f}ms "
            f"{t_numpy / t_numba:>7.1f}x  {same}"
        )
        if not same:
            raise SystemExit(f"lane mismatch in {name}")


if __name__ == "__main__":
    main()
