"""Hot pixel kernels: numba-jitted loops with pure-numpy fallbacks.

The jitted path is the default whenever numba imports; set ``SEGROBUST_NUMBA=0``
to force the fallback path. Both paths run the per-pixel arithmetic in the same
order, so they produce bit-identical float64 results; ``benchmarks/bench_kernels.py``
compares their throughput.

All correlation kernels use edge-replicate padding and expect float64 input.
"""

from __future__ import annotations

import math
import os

import numpy as np

_flag = os.environ.get("SEGROBUST_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _flag not in ("0", "false", "no", "off")

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a hard dependency
    NUMBA_AVAILABLE = False

USING_NUMBA = NUMBA_AVAILABLE and NUMBA_REQUESTED


def set_lane(use_numba: bool) -> None:
    """Switch between the compiled and fallback lanes at runtime."""
    global USING_NUMBA
    if use_numba and not NUMBA_AVAILABLE:
        raise RuntimeError("numba is not importable; only the numpy lane exists")
    USING_NUMBA = bool(use_numba)


def _jit(fn):
    # compiled variants are built whenever numba imports; USING_NUMBA only
    # picks which variant each call dispatches to
    if NUMBA_AVAILABLE:
        return njit(cache=True)(fn)
    return fn


# ---------------------------------------------------------------------------
# separable correlation along rows / columns


def _corr_axis0_loop(padded, weights, out):
    h, w, c = out.shape
    k = weights.shape[0]
    for y in range(h):
        for x in range(w):
            for ch in range(c):
                acc = 0.0
                for i in range(k):
                    acc += weights[i] * padded[y + i, x, ch]
                out[y, x, ch] = acc


def _corr_axis0_numpy(padded, weights, out):
    h = out.shape[0]
    out[:] = 0.0
    # tap-major accumulation matches the loop kernel's per-pixel add order
    for i in range(weights.shape[0]):
        out += weights[i] * padded[i : i + h]


def _corr_axis1_loop(padded, weights, out):
    h, w, c = out.shape
    k = weights.shape[0]
    for y in range(h):
        for x in range(w):
            for ch in range(c):
                acc = 0.0
                for i in range(k):
                    acc += weights[i] * padded[y, x + i, ch]
                out[y, x, ch] = acc


def _corr_axis1_numpy(padded, weights, out):
    w = out.shape[1]
    out[:] = 0.0
    for i in range(weights.shape[0]):
        out += weights[i] * padded[:, i : i + w]


_corr_axis0_fast = _jit(_corr_axis0_loop)
_corr_axis1_fast = _jit(_corr_axis1_loop)


def correlate_axis(img: np.ndarray, weights: np.ndarray, axis: int) -> np.ndarray:
    """1-D correlation of an (H, W, C) float64 raster along ``axis`` 0 or 1."""
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    radius = weights.shape[0] // 2
    pad = [(0, 0)] * 3
    pad[axis] = (radius, weights.shape[0] - 1 - radius)
    padded = np.pad(img, pad, mode="edge")
    out = np.empty_like(img)
    if axis == 0:
        fn = _corr_axis0_fast if USING_NUMBA else _corr_axis0_numpy
    else:
        fn = _corr_axis1_fast if USING_NUMBA else _corr_axis1_numpy
    fn(padded, weights, out)
    return out


def correlate_sep(img: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Separable 2-D correlation (rows then columns) with one 1-D kernel."""
    return correlate_axis(correlate_axis(img, weights, 0), weights, 1)


# ---------------------------------------------------------------------------
# dense 2-D correlation (disk and line kernels)


def _corr2d_loop(padded, kern, out):
    h, w, c = out.shape
    kh, kw = kern.shape
    for y in range(h):
        for x in range(w):
            for ch in range(c):
                acc = 0.0
                for ky in range(kh):
                    for kx in range(kw):
                        wv = kern[ky, kx]
                        if wv == 0.0:
                            continue
                        acc += wv * padded[y + ky, x + kx, ch]
                out[y, x, ch] = acc


def _corr2d_numpy(padded, kern, out):
    h, w = out.shape[:2]
    kh, kw = kern.shape
    out[:] = 0.0
    for ky in range(kh):
        for kx in range(kw):
            wv = kern[ky, kx]
            if wv == 0.0:
                continue
            out += wv * padded[ky : ky + h, kx : kx + w]


_corr2d_fast = _jit(_corr2d_loop)


def correlate2d(img: np.ndarray, kern: np.ndarray) -> np.ndarray:
    """2-D correlation of an (H, W, C) float64 raster with an arbitrary kernel."""
    kern = np.ascontiguousarray(kern, dtype=np.float64)
    kh, kw = kern.shape
    ry, rx = kh // 2, kw // 2
    padded = np.pad(img, ((ry, kh - 1 - ry), (rx, kw - 1 - rx), (0, 0)), mode="edge")
    out = np.empty_like(img)
    fn = _corr2d_fast if USING_NUMBA else _corr2d_numpy
    fn(padded, kern, out)
    return out


# ---------------------------------------------------------------------------
# frosted-glass pixel shuffling


def _glass_shuffle_loop(img, dy, dx):
    iters, h, w = dy.shape
    for it in range(iters):
        for y in range(h):
            for x in range(w):
                ty = y + dy[it, y, x]
                tx = x + dx[it, y, x]
                if ty < 0:
                    ty = 0
                elif ty >= h:
                    ty = h - 1
                if tx < 0:
                    tx = 0
                elif tx >= w:
                    tx = w - 1
                for ch in range(img.shape[2]):
                    tmp = img[y, x, ch]
                    img[y, x, ch] = img[ty, tx, ch]
                    img[ty, tx, ch] = tmp


_glass_shuffle_fast = _jit(_glass_shuffle_loop)


def glass_shuffle(img: np.ndarray, dy: np.ndarray, dx: np.ndarray) -> np.ndarray:
    """Sequentially swap each pixel with a displaced neighbour, in place.

    The swap at (y, x) sees the results of all earlier swaps, which is what
    produces the frosted-glass smear; the loop cannot be vectorized, so the
    fallback path runs it in plain Python.
    """
    fn = _glass_shuffle_fast if USING_NUMBA else _glass_shuffle_loop
    fn(img, dy, dx)
    return img


# ---------------------------------------------------------------------------
# fused label painting + alpha blend


def _paint_blend_loop(orig, ids, lut, alpha, out):
    # gather first, then blend over flat contiguous arrays: the second loop
    # has no indirection, so LLVM vectorizes it (about 2.5x over a fused loop)
    beta = 1.0 - alpha
    idf = ids.ravel()
    of = orig.reshape(-1)
    ouf = out.reshape(-1)
    n = idf.shape[0]
    paint = np.empty(3 * n, dtype=np.uint8)
    for p in range(n):
        cid = idf[p]
        b = 3 * p
        paint[b] = lut[cid, 0]
        paint[b + 1] = lut[cid, 1]
        paint[b + 2] = lut[cid, 2]
    for i in range(3 * n):
        v = alpha * paint[i] + beta * of[i]
        ouf[i] = np.uint8(math.floor(v + 0.5))


def _paint_blend_numpy(orig, ids, lut, alpha, out):
    paint = lut[ids].astype(np.float64)
    v = alpha * paint + (1.0 - alpha) * orig.astype(np.float64)
    out[:] = np.floor(v + 0.5).astype(np.uint8)


_paint_blend_fast = _jit(_paint_blend_loop)


def paint_blend(orig: np.ndarray, ids: np.ndarray, lut: np.ndarray, alpha: float) -> np.ndarray:
    """Render ``lut[ids]`` and alpha-blend it over ``orig`` in one pass.

    Blend channels are computed in float64 and rounded half away from zero,
    so alpha 0 and 1 reproduce the original and the painting bit-exactly.
    """
    orig = np.ascontiguousarray(orig)
    ids = np.ascontiguousarray(ids)
    out = np.empty_like(orig)
    fn = _paint_blend_fast if USING_NUMBA else _paint_blend_numpy
    fn(orig, ids, lut, float(alpha), out)
    return out


# ---------------------------------------------------------------------------
# 3x3 convolution lowering (gather/scatter between rasters and GEMM operands)


def _im2col3x3_loop(xp, cols, h, w):
    n, _, _, c = xp.shape
    for ni in range(n):
        for y in range(h):
            for x in range(w):
                row = (ni * h + y) * w + x
                t = 0
                for dy in range(3):
                    for dx in range(3):
                        base = t * c
                        for ch in range(c):
                            cols[row, base + ch] = xp[ni, y + dy, x + dx, ch]
                        t += 1


def _im2col3x3_numpy(xp, cols, h, w):
    n, _, _, c = xp.shape
    view = cols.reshape(n, h, w, 9, c)
    t = 0
    for dy in range(3):
        for dx in range(3):
            view[:, :, :, t, :] = xp[:, dy : dy + h, dx : dx + w, :]
            t += 1


_im2col3x3_fast = _jit(_im2col3x3_loop)


def im2col3x3(x: np.ndarray) -> np.ndarray:
    """(N, H, W, C) float64 -> (N*H*W, 9*C) patch matrix, zero same-padding."""
    n, h, w, c = x.shape
    xp = np.zeros((n, h + 2, w + 2, c), dtype=np.float64)
    xp[:, 1:-1, 1:-1, :] = x
    cols = np.empty((n * h * w, 9 * c), dtype=np.float64)
    fn = _im2col3x3_fast if USING_NUMBA else _im2col3x3_numpy
    fn(xp, cols, h, w)
    return cols


def _col2im3x3_loop(d, out):
    # gather form: each output pixel sums its 9 patch contributions in
    # ascending tap order, matching the fallback's slice-add order
    n, h, w, c = out.shape
    for ni in range(n):
        for yy in range(h):
            for xx in range(w):
                for ch in range(c):
                    acc = 0.0
                    for dy in range(3):
                        y = yy + 1 - dy
                        if y < 0 or y >= h:
                            continue
                        for dx in range(3):
                            x = xx + 1 - dx
                            if x < 0 or x >= w:
                                continue
                            acc += d[ni, y, x, (dy * 3 + dx) * c + ch]
                    out[ni, yy, xx, ch] = acc


def _col2im3x3_numpy(d, out):
    n, h, w, c = out.shape
    dxp = np.zeros((n, h + 2, w + 2, c), dtype=np.float64)
    dv = d.reshape(n, h, w, 9, c)
    t = 0
    for dy in range(3):
        for dx in range(3):
            dxp[:, dy : dy + h, dx : dx + w, :] += dv[:, :, :, t, :]
            t += 1
    out[:] = dxp[:, 1:-1, 1:-1, :]


_col2im3x3_fast = _jit(_col2im3x3_loop)


def col2im3x3(dcol: np.ndarray, n: int, h: int, w: int, c: int) -> np.ndarray:
    """Adjoint of :func:`im2col3x3`: scatter patch gradients back to a raster."""
    out = np.empty((n, h, w, c), dtype=np.float64)
    if USING_NUMBA:
        _col2im3x3_fast(dcol.reshape(n, h, w, 9 * c), out)
    else:
        _col2im3x3_numpy(dcol, out)
    return out


def round_to_u8(values: np.ndarray) -> np.ndarray:
    """Round half away from zero and clamp to the 8-bit range."""
    return np.clip(np.floor(values + 0.5), 0.0, 255.0).astype(np.uint8)
