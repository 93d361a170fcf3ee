"""Random crop-resize sampling: patch-guided and naive variants.

Both samplers draw a target area uniformly from [a*W*H, b*W*H] and an aspect
ratio rho, giving crop dims h = sqrt(area/rho), w = rho*h (clamped to the
frame, recomputing the other side to preserve the sampled area when one axis
saturates). The patch-guided sampler then places the top-left corner inside
[max(0, x0-w), min(x0, W-w)] x [max(0, y0-h), min(y0, H-h)], which guarantees
the patch center (x0, y0) lies inside every crop; the naive sampler places it
anywhere in frame. Corners are drawn uniformly over the integer lattice of
those intervals, which preserves the inclusion guarantee exactly.
"""

from __future__ import annotations

import math

import numpy as np

from .ops.transforms import CropSpec, crop_resize, crop_resize_vjp


def _sample_dims(rng: np.random.Generator, width: int, height: int,
                 area_lo: float, area_hi: float,
                 aspect_range: tuple[float, float]) -> tuple[int, int]:
    if not 0.0 < area_lo <= area_hi <= 1.0:
        raise ValueError(f"area fractions must satisfy 0 < a <= b <= 1, got ({area_lo}, {area_hi})")
    area = rng.uniform(area_lo * width * height, area_hi * width * height)
    rho = rng.uniform(aspect_range[0], aspect_range[1])
    h = math.sqrt(area / rho)
    w = rho * h
    if h > height:
        h = float(height)
        w = min(area / h, float(width))
    elif w > width:
        w = float(width)
        h = min(area / w, float(height))
    wi = min(max(int(round(w)), 1), width)
    hi = min(max(int(round(h)), 1), height)
    return wi, hi


def _lattice_uniform(rng: np.random.Generator, lo: float, hi: float) -> int:
    lo_i = math.ceil(lo)
    hi_i = math.floor(hi)
    # Cannot collapse for a center inside the frame and dims >= 1.
    assert lo_i <= hi_i, f"empty corner interval [{lo}, {hi}]"
    return int(rng.integers(lo_i, hi_i + 1))


def sample_patch_crop(rng: np.random.Generator, width: int, height: int,
                      p: tuple[float, float],
                      area_lo: float, area_hi: float,
                      aspect_range: tuple[float, float] = (0.75, 4.0 / 3.0)) -> CropSpec:
    """Crop spec guaranteed to contain the patch center p = (x0, y0)."""
    x0, y0 = p
    if not (0 <= x0 <= width and 0 <= y0 <= height):
        raise ValueError(f"patch center {p} outside {width}x{height} frame")
    w, h = _sample_dims(rng, width, height, area_lo, area_hi, aspect_range)
    x = _lattice_uniform(rng, max(0.0, x0 - w), min(x0, float(width - w)))
    y = _lattice_uniform(rng, max(0.0, y0 - h), min(y0, float(height - h)))
    return CropSpec(x=x, y=y, w=w, h=h, out_h=height, out_w=width)


def sample_naive_crop(rng: np.random.Generator, width: int, height: int,
                      area_lo: float, area_hi: float,
                      aspect_range: tuple[float, float] = (0.75, 4.0 / 3.0)) -> CropSpec:
    """Unconstrained crop spec: corner anywhere the crop fits."""
    w, h = _sample_dims(rng, width, height, area_lo, area_hi, aspect_range)
    x = int(rng.integers(0, width - w + 1))
    y = int(rng.integers(0, height - h + 1))
    return CropSpec(x=x, y=y, w=w, h=h, out_h=height, out_w=width)


def apply(img: np.ndarray, spec: CropSpec) -> np.ndarray:
    return crop_resize(img, spec)


def apply_vjp(img_shape: tuple, spec: CropSpec, cot: np.ndarray) -> np.ndarray:
    return crop_resize_vjp(img_shape, spec, cot)
