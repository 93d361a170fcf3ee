"""Differentiable image primitives with exact adjoints.

Every operation here is linear in the pixel values (bilinear resampling,
affine warping, blurring, DCT masking), so each vjp is the exact transpose
of the forward map and the adjoint identity <Lx, u> = <x, L^T u> holds to
machine precision.

Conventions: x is the column index, y the row index. Resampling aligns pixel
centers (source coord = (dst + 0.5) * scale - 0.5) with edge clamping, so a
same-size resize is the identity and constants are preserved. Warps inverse-
map with zero fill outside the source frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import fft as _fft

from . import kernels


@dataclass(frozen=True)
class CropSpec:
    x: int
    y: int
    w: int
    h: int
    out_h: int
    out_w: int

    def validate(self, height: int, width: int) -> "CropSpec":
        if self.w < 1 or self.h < 1 or self.out_w < 1 or self.out_h < 1:
            raise ValueError(f"crop dims must be >= 1: {self}")
        if self.x < 0 or self.y < 0 or self.x + self.w > width or self.y + self.h > height:
            raise ValueError(f"crop {self} exceeds {height}x{width} frame")
        return self


@dataclass(frozen=True)
class AffineParams:
    dx: float = 0.0
    dy: float = 0.0
    theta_deg: float = 0.0
    scale: float = 1.0
    center: Optional[tuple[float, float]] = None  # (cx, cy); None = image center

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"scale must be > 0, got {self.scale}")


def _resize_coords(n_in: int, n_out: int) -> np.ndarray:
    """Source coordinates for each output index, clamped to [0, n_in - 1]."""
    c = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    return np.clip(c, 0.0, n_in - 1.0)


def _crop_grid(spec: CropSpec) -> tuple[np.ndarray, np.ndarray]:
    ys = _resize_coords(spec.h, spec.out_h) + spec.y
    xs = _resize_coords(spec.w, spec.out_w) + spec.x
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return yy.ravel(), xx.ravel()


def crop_resize(img: np.ndarray, spec: CropSpec) -> np.ndarray:
    """Extract the sub-rectangle and bilinearly resample it to (out_h, out_w)."""
    img = np.asarray(img, dtype=np.float64)
    spec.validate(img.shape[0], img.shape[1])
    yy, xx = _crop_grid(spec)
    out = kernels.bilinear_gather(img, yy, xx)
    return out.reshape(spec.out_h, spec.out_w, img.shape[2])


def crop_resize_vjp(img_shape: tuple, spec: CropSpec, cot: np.ndarray) -> np.ndarray:
    """Transpose of crop_resize: cotangent on the output pulled back to the input."""
    h, w = img_shape[0], img_shape[1]
    spec.validate(h, w)
    cot = np.asarray(cot, dtype=np.float64)
    if cot.shape[:2] != (spec.out_h, spec.out_w):
        raise ValueError(f"cotangent shape {cot.shape} != crop output {(spec.out_h, spec.out_w)}")
    yy, xx = _crop_grid(spec)
    return kernels.bilinear_scatter(cot.reshape(-1, cot.shape[2]), yy, xx, h, w)


def _warp_grid(h: int, w: int, p: AffineParams) -> tuple[np.ndarray, np.ndarray]:
    """Inverse-mapped source coordinates for every output pixel."""
    cx, cy = p.center if p.center is not None else ((w - 1) / 2.0, (h - 1) / 2.0)
    jj, ii = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    dx = jj - cx - p.dx
    dy = ii - cy - p.dy
    th = math.radians(p.theta_deg)
    cos_t, sin_t = math.cos(th), math.sin(th)
    # inverse of: dst = R(theta) * s * (src - c) + c + t
    xs = (cos_t * dx + sin_t * dy) / p.scale + cx
    ys = (-sin_t * dx + cos_t * dy) / p.scale + cy
    return ys.ravel(), xs.ravel()


def warp_affine(img: np.ndarray, p: AffineParams) -> np.ndarray:
    """Shift/rotate/scale about the pivot; bilinear, zero fill outside the frame."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[0], img.shape[1]
    ys, xs = _warp_grid(h, w, p)
    return kernels.bilinear_gather(img, ys, xs).reshape(img.shape)


def warp_affine_vjp(img_shape: tuple, p: AffineParams, cot: np.ndarray) -> np.ndarray:
    h, w = img_shape[0], img_shape[1]
    cot = np.asarray(cot, dtype=np.float64)
    ys, xs = _warp_grid(h, w, p)
    return kernels.bilinear_scatter(cot.reshape(-1, cot.shape[2]), ys, xs, h, w)


def _gauss_kernel(sigma: float) -> np.ndarray:
    radius = max(1, int(math.ceil(3.0 * sigma)))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(arr: np.ndarray, sigma: float) -> np.ndarray:
    """Separable normalized Gaussian, edge-replicate padding; sigma=0 is identity.

    Works on (H, W) fields and (H, W, C) images alike.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    a = np.asarray(arr, dtype=np.float64)
    if sigma == 0:
        return a.copy()
    k = _gauss_kernel(sigma)
    out = _conv1d_replicate(a, k, axis=0)
    return _conv1d_replicate(out, k, axis=1)


def _conv1d_replicate(a: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    r = len(k) // 2
    pad = [(0, 0)] * a.ndim
    pad[axis] = (r, r)
    ap = np.pad(a, pad, mode="edge")
    out = np.zeros_like(a)
    for i, kv in enumerate(k):
        sl = [slice(None)] * a.ndim
        sl[axis] = slice(i, i + a.shape[axis])
        out += kv * ap[tuple(sl)]
    return out


def dct_lowpass(img: np.ndarray, keep_frac: float) -> np.ndarray:
    """Zero all 2-D DCT coefficients with u >= keep_frac*H or v >= keep_frac*W.

    Orthonormal DCT-II per channel, so the operator is an orthogonal
    projection: idempotent and self-adjoint.
    """
    if not 0.0 < keep_frac <= 1.0:
        raise ValueError(f"keep_frac must be in (0, 1], got {keep_frac}")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[0], img.shape[1]
    coeff = _fft.dctn(img, type=2, norm="ortho", axes=(0, 1))
    u = np.arange(h)[:, None]
    v = np.arange(w)[None, :]
    keep = (u < keep_frac * h) & (v < keep_frac * w)
    if img.ndim == 3:
        keep = keep[:, :, None]
    coeff = np.where(keep, coeff, 0.0)
    return _fft.idctn(coeff, type=2, norm="ortho", axes=(0, 1))


def dct_lowpass_vjp(keep_frac: float, cot: np.ndarray) -> np.ndarray:
    """The projection is self-adjoint: the vjp is the operator itself."""
    return dct_lowpass(cot, keep_frac)
