"""Core data model and pixel-level primitives.

Images are float64 arrays of shape (H, W, 3) with intensities in [0, 1];
masks are float64 arrays of shape (H, W) with values in {0, 1}. Intensities
stay continuous throughout optimization; 8-bit quantization happens only at
PNG export.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image as _PILImage


class DimensionMismatch(ValueError):
    """Raised when images/masks that must share dimensions do not."""


def as_image(arr) -> np.ndarray:
    """Validate and return a float64 (H, W, 3) image with values in [0, 1]."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError("image dimensions must be >= 1")
    if np.min(a) < 0.0 or np.max(a) > 1.0:
        raise ValueError("image intensities must lie in [0, 1]")
    return a


def as_mask(arr) -> np.ndarray:
    """Validate and return a float64 (H, W) mask with values in {0, 1}."""
    m = np.asarray(arr, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected an (H, W) mask, got shape {m.shape}")
    if not np.all((m == 0.0) | (m == 1.0)):
        raise ValueError("mask values must be 0 or 1")
    return m


def _check_same_hw(*arrays) -> None:
    shapes = {a.shape[:2] for a in arrays}
    if len(shapes) != 1:
        raise DimensionMismatch(f"mismatched dimensions: {sorted(shapes)}")


def compose_adversarial(scene: np.ndarray, patch: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Composite: scene where mask is 0, patch content where mask is 1."""
    scene = as_image(scene)
    patch = as_image(patch)
    mask = as_mask(mask)
    _check_same_hw(scene, patch, mask)
    m = mask[:, :, None]
    return scene * (1.0 - m) + patch * m


def clip_budget(delta: np.ndarray, scene: np.ndarray, budget: float) -> np.ndarray:
    """Project patch content into the L-inf ball around the scene, then [0, 1].

    Every channel of the output lies in [max(0, scene - budget),
    min(1, scene + budget)] elementwise.
    """
    if not 0.0 < budget <= 1.0:
        raise ValueError(f"budget must be in (0, 1], got {budget}")
    delta = np.asarray(delta, dtype=np.float64)
    scene = as_image(scene)
    if delta.shape != scene.shape:
        raise DimensionMismatch(f"delta shape {delta.shape} != scene shape {scene.shape}")
    lo = np.maximum(0.0, scene - budget)
    hi = np.minimum(1.0, scene + budget)
    return np.clip(delta, lo, hi)


def mask_area(mask: np.ndarray) -> int:
    """Number of 1-pixels in the mask."""
    return int(np.count_nonzero(np.asarray(mask)))


@dataclass
class AttackConfig:
    """All scalar knobs of the attack.

    Defaults follow the reference configuration: threshold_init=0.6 growing by
    0.002 per mask update, field spread 0.2 (units of min(H, W)), field step
    0.15, rank-10 local compression with unit weight, content step 1/255 under
    a 16/255 budget for 300 iterations, crop areas in [0.5, 0.9] of the frame,
    and a 120x120-pixel stopping area for the mask.
    """

    threshold_init: float = 0.6
    threshold_growth: float = 0.002
    field_sigma: float = 0.2
    field_lr: float = 0.15
    svd_rank: int = 10
    local_weight: float = 1.0
    step_size: float = 1.0 / 255.0
    budget: float = 16.0 / 255.0
    iterations: int = 300
    crop_area: tuple[float, float] = (0.5, 0.9)
    aspect_range: tuple[float, float] = (0.75, 4.0 / 3.0)
    area_threshold: int = 120 * 120
    lambda_tv: float = 1e-4
    lambda_nps: float = 1e-2
    mode: str = "digital"
    seed: int = 0

    def __post_init__(self):
        a, b = self.crop_area
        if not 0.0 < a <= b <= 1.0:
            raise ValueError(f"crop_area must satisfy 0 < a <= b <= 1, got {self.crop_area}")
        if not 0.0 < self.budget <= 1.0:
            raise ValueError(f"budget must be in (0, 1], got {self.budget}")
        if self.svd_rank < 1:
            raise ValueError("svd_rank must be >= 1")
        if self.area_threshold < 1:
            raise ValueError("area_threshold must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not 0.0 < self.threshold_init < 1.0:
            raise ValueError(f"threshold_init must be in (0, 1), got {self.threshold_init}")
        if self.threshold_growth < 0.0:
            raise ValueError("threshold_growth must be >= 0")
        if self.mode not in ("digital", "physical"):
            raise ValueError(f"mode must be 'digital' or 'physical', got {self.mode!r}")


@dataclass
class PotentialField:
    """Scalar field over pixels; the mask is its super-level set at `threshold`."""

    data: np.ndarray
    threshold: float = 0.0

    def copy(self) -> "PotentialField":
        return PotentialField(self.data.copy(), self.threshold)


# --- PNG import/export (8-bit RGB, linear [0, 1] mapping) ---


def load_image(path) -> np.ndarray:
    img = _PILImage.open(path).convert("RGB")
    return np.asarray(img, dtype=np.float64) / 255.0


def save_image(path, img: np.ndarray) -> None:
    img = as_image(img)
    q = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    _PILImage.fromarray(q, mode="RGB").save(path, format="PNG")


def save_gray(path, arr: np.ndarray) -> None:
    """Export a mask or field as 8-bit grayscale; values clipped to [0, 1]."""
    a = np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0)
    q = np.round(a * 255.0).astype(np.uint8)
    _PILImage.fromarray(q, mode="L").save(path, format="PNG")


def load_gray(path) -> np.ndarray:
    img = _PILImage.open(path).convert("L")
    return np.asarray(img, dtype=np.float64) / 255.0
