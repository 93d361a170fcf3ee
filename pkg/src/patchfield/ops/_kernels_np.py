"""Pure-NumPy bilinear gather/scatter kernels (fallback backend).

Arithmetic mirrors the compiled kernels tap for tap (t00 + t01 + t10 + t11)
so both backends agree to the last bit on the gather path.
"""

import numpy as np


def bilinear_gather(src, ys, xs):
    """Sample src (H, W, C) at fractional row/col coords; out-of-frame taps read 0.

    ys, xs: 1-D float64 arrays of equal length N. Returns (N, C).
    """
    h, w = src.shape[0], src.shape[1]
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = y0 + 1
    x1 = x0 + 1
    wy = ys - y0
    wx = xs - x0

    def tap(yi, xi, wt):
        valid = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        vals = src[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
        return np.where(valid, wt, 0.0)[:, None] * vals

    return (
        tap(y0, x0, (1.0 - wy) * (1.0 - wx))
        + tap(y0, x1, (1.0 - wy) * wx)
        + tap(y1, x0, wy * (1.0 - wx))
        + tap(y1, x1, wy * wx)
    )


def bilinear_scatter(cot, ys, xs, h, w):
    """Adjoint of bilinear_gather: accumulate (N, C) cotangents into (h, w, C)."""
    cot = np.asarray(cot, dtype=np.float64)
    out = np.zeros((h, w, cot.shape[1]), dtype=np.float64)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = y0 + 1
    x1 = x0 + 1
    wy = ys - y0
    wx = xs - x0
    for yi, xi, wt in (
        (y0, x0, (1.0 - wy) * (1.0 - wx)),
        (y0, x1, (1.0 - wy) * wx),
        (y1, x0, wy * (1.0 - wx)),
        (y1, x1, wy * wx),
    ):
        valid = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        np.add.at(out, (yi[valid], xi[valid]), wt[valid, None] * cot[valid])
    return out
