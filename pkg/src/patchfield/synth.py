"""Synthetic desk-scale scenes and targets for demos and verification runs.

Scenes are low-contrast smooth textures (so the budget-bounded patch has
local leverage); targets are single large soft color blobs, whose features
are stable across crop-resize views. Both are deterministic in the seed.
"""

from __future__ import annotations

import numpy as np

from .ops.transforms import gaussian_blur


def make_desk_scene(seed: int, height: int = 64, width: int = 64,
                    amplitude: float = 0.05) -> np.ndarray:
    rng = np.random.default_rng(seed)
    cell = max(1, min(height, width) // 8)
    a = rng.random(((height + cell - 1) // cell, (width + cell - 1) // cell, 3))
    a = np.kron(a, np.ones((cell, cell, 1)))[:height, :width]
    a = gaussian_blur(a, cell / 2.0)
    a = 0.5 + amplitude * (a - a.mean()) / (a.std() + 1e-9)
    return np.clip(a, 0.0, 1.0)


def make_desk_target(seed: int, height: int = 64, width: int = 64) -> np.ndarray:
    rng = np.random.default_rng(seed + 1000)
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    cx = width / 2 + rng.uniform(-width / 16, width / 16)
    cy = height / 2 + rng.uniform(-height / 16, height / 16)
    d2 = (x - cx) ** 2 + (y - cy) ** 2
    blob = np.exp(-d2 / (2.0 * (0.28 * width) ** 2))
    color = rng.uniform(0.0, 1.0, size=3)
    color = 0.15 + 0.7 * color / max(color.max(), 1e-9)
    bg = rng.uniform(0.3, 0.7, size=3)
    img = bg[None, None, :] + (color - bg)[None, None, :] * blob[:, :, None]
    return np.clip(img, 0.0, 1.0)
