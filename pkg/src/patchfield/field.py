"""Potential-field construction, thresholding, morphology, and field updates.

The patch mask is the super-level set {field >= threshold} of a Gaussian
potential field centered on the chosen region. Thresholding is followed by
light morphology (blur + re-threshold, hole filling, closing, small-component
removal) to keep one clean connected blob. The field grows by non-negative
gradient increments while the threshold grows on a fixed schedule, shrinking
the mask until its area drops under the stopping threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import PotentialField, as_mask
from .ops.transforms import gaussian_blur

_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class MorphologyConfig:
    blur_sigma: float = 1.5
    closing_radius: int = 2
    min_component_area: int = 64

    def __post_init__(self):
        if self.blur_sigma < 0 or self.closing_radius < 0 or self.min_component_area < 0:
            raise ValueError("morphology parameters must be >= 0")


def build_field(center: tuple[float, float], sigma: float, height: int, width: int) -> PotentialField:
    """Gaussian field exp(-((x-x0)^2 + (y-y0)^2) / (2 s^2)) with s = sigma*min(H, W).

    sigma is dimensionless; it scales with the short image side.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    x0, y0 = center
    if not (0 <= x0 <= width and 0 <= y0 <= height):
        raise ValueError(f"center {center} outside {width}x{height} frame")
    s_px = sigma * min(height, width)
    xs = np.arange(width, dtype=np.float64) - x0
    ys = np.arange(height, dtype=np.float64) - y0
    d2 = ys[:, None] ** 2 + xs[None, :] ** 2
    return PotentialField(np.exp(-d2 / (2.0 * s_px * s_px)))


def threshold_field(phi: PotentialField, tau: float) -> np.ndarray:
    """Raw binary mask: 1 where the field is >= tau."""
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    return (phi.data >= tau).astype(np.float64)


def _disc(radius: int) -> np.ndarray:
    if radius == 0:
        return np.ones((1, 1), dtype=bool)
    t = np.arange(-radius, radius + 1)
    return (t[:, None] ** 2 + t[None, :] ** 2) <= radius * radius


def postprocess(raw: np.ndarray, cfg: MorphologyConfig = MorphologyConfig()) -> np.ndarray:
    """Clean a raw binary mask: blur + re-threshold, fill holes, close, drop specks."""
    m = as_mask(raw).astype(bool)
    if cfg.blur_sigma > 0:
        m = gaussian_blur(m.astype(np.float64), cfg.blur_sigma) >= 0.5
    m = ndimage.binary_fill_holes(m)
    if cfg.closing_radius > 0:
        disc = _disc(cfg.closing_radius)
        m = ndimage.binary_dilation(m, structure=disc, border_value=0)
        m = ndimage.binary_erosion(m, structure=disc, border_value=1)
        m = ndimage.binary_fill_holes(m)
    if cfg.min_component_area > 0:
        labels, n = ndimage.label(m, structure=_FOUR_CONN)
        if n:
            counts = np.bincount(labels.ravel())
            keep = counts >= cfg.min_component_area
            keep[0] = False
            m = keep[labels]
    return m.astype(np.float64)


def generate_mask(phi: PotentialField, tau: float, cfg: MorphologyConfig = MorphologyConfig()) -> np.ndarray:
    """Binarize the field at tau and post-process."""
    return postprocess(threshold_field(phi, tau), cfg)


def update_field(phi: PotentialField, grad: np.ndarray, lr: float) -> PotentialField:
    """Non-negative field update: phi + lr * max(0, grad), elementwise."""
    if lr < 0:
        raise ValueError(f"lr must be >= 0, got {lr}")
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != phi.data.shape:
        raise ValueError(f"gradient shape {grad.shape} != field shape {phi.data.shape}")
    return PotentialField(phi.data + lr * np.maximum(0.0, grad), phi.threshold)
