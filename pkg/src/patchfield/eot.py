"""Expectation-over-transformation chain for physical-mode robustness.

A sampled chain fixes every random quantity (warp parameters, noise field,
dropout mask), so replaying it is bit-identical. Application order is
geometric -> photometric -> noise -> frequency -> dropout: pose first, then
sensor effects. Clamp stages gradient as pass-through strictly inside (0, 1)
and zero at saturated pixels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ops.transforms import (
    AffineParams,
    dct_lowpass,
    dct_lowpass_vjp,
    warp_affine,
    warp_affine_vjp,
)


@dataclass(frozen=True)
class EotConfig:
    """Per-transform ranges; magnitudes are the reference distribution.

    Shifts are drawn as magnitude * random sign with magnitudes up to a tenth
    of the frame side; rotation +/-20 deg; scale in [0.25, 1.25]; pixel noise
    +/-16/255; brightness +/-0.1; contrast in [0.8, 1.2]; 40% of low DCT
    frequencies kept; 10% pixel dropout.
    """

    h_shift: bool = True
    v_shift: bool = True
    rotation: bool = True
    scale: bool = True
    noise: bool = True
    brightness: bool = True
    contrast: bool = True
    dct: bool = True
    dropout: bool = True
    h_shift_frac: float = 0.1
    v_shift_frac: float = 0.1
    rotation_deg: float = 20.0
    scale_range: tuple[float, float] = (0.25, 1.25)
    noise_amp: float = 16.0 / 255.0
    brightness_amp: float = 0.1
    contrast_range: tuple[float, float] = (0.8, 1.2)
    dct_keep: float = 0.4
    dropout_prob: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must be in [0, 1]")
        if not 0.0 < self.dct_keep <= 1.0:
            raise ValueError("dct_keep must be in (0, 1]")


@dataclass
class TransformChain:
    """One concrete draw from the EoT distribution; replayable as-is."""

    affine: Optional[AffineParams] = None
    brightness: Optional[float] = None
    contrast: Optional[float] = None
    noise: Optional[np.ndarray] = None
    dct_keep: Optional[float] = None
    dropout_keep: Optional[np.ndarray] = None  # (H, W) 0/1 keep mask

    def is_identity(self) -> bool:
        return all(
            v is None
            for v in (self.affine, self.brightness, self.contrast,
                      self.noise, self.dct_keep, self.dropout_keep)
        )


def sample_chain(rng: np.random.Generator, cfg: EotConfig, height: int, width: int) -> TransformChain:
    """Draw one transform instance per enabled stage, in a fixed order."""
    chain = TransformChain()
    dx = dy = 0.0
    theta = 0.0
    scale = 1.0
    geometric = False
    if cfg.h_shift:
        dx = rng.uniform(0.0, width * cfg.h_shift_frac) * (1.0 if rng.random() < 0.5 else -1.0)
        geometric = True
    if cfg.v_shift:
        dy = rng.uniform(0.0, height * cfg.v_shift_frac) * (1.0 if rng.random() < 0.5 else -1.0)
        geometric = True
    if cfg.rotation:
        theta = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg)
        geometric = True
    if cfg.scale:
        scale = rng.uniform(cfg.scale_range[0], cfg.scale_range[1])
        geometric = True
    if geometric:
        chain.affine = AffineParams(dx=dx, dy=dy, theta_deg=theta, scale=scale)
    if cfg.brightness:
        chain.brightness = float(rng.uniform(-cfg.brightness_amp, cfg.brightness_amp))
    if cfg.contrast:
        chain.contrast = float(rng.uniform(cfg.contrast_range[0], cfg.contrast_range[1]))
    if cfg.noise:
        chain.noise = rng.uniform(-cfg.noise_amp, cfg.noise_amp, size=(height, width, 3))
    if cfg.dct:
        chain.dct_keep = cfg.dct_keep
    if cfg.dropout:
        chain.dropout_keep = (rng.random((height, width)) >= cfg.dropout_prob).astype(np.float64)
    return chain


def _clamp(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, 1.0)


def _stages(img: np.ndarray, chain: TransformChain) -> list[np.ndarray]:
    """Forward pass keeping every stage input (needed for the clamp masks)."""
    xs = [np.asarray(img, dtype=np.float64)]
    x = xs[0]
    if chain.affine is not None:
        x = warp_affine(x, chain.affine)
        xs.append(x)
    if chain.brightness is not None:
        x = _clamp(x + chain.brightness)
        xs.append(x)
    if chain.contrast is not None:
        x = _clamp(chain.contrast * x)
        xs.append(x)
    if chain.noise is not None:
        x = _clamp(x + chain.noise)
        xs.append(x)
    if chain.dct_keep is not None:
        x = _clamp(dct_lowpass(x, chain.dct_keep))
        xs.append(x)
    if chain.dropout_keep is not None:
        x = x * chain.dropout_keep[:, :, None]
        xs.append(x)
    return xs


def apply_chain(img: np.ndarray, chain: TransformChain) -> np.ndarray:
    return _stages(img, chain)[-1]


def apply_chain_vjp(img: np.ndarray, chain: TransformChain, cot: np.ndarray) -> np.ndarray:
    """Pull a cotangent on the transformed image back to the input image."""
    img = np.asarray(img, dtype=np.float64)
    g = np.asarray(cot, dtype=np.float64)

    # Recompute stage inputs; walk the chain backwards.
    x = img
    ops = []
    if chain.affine is not None:
        ops.append(("affine", x))
        x = warp_affine(x, chain.affine)
    if chain.brightness is not None:
        ops.append(("brightness", x))
        x = _clamp(x + chain.brightness)
    if chain.contrast is not None:
        ops.append(("contrast", x))
        x = _clamp(chain.contrast * x)
    if chain.noise is not None:
        ops.append(("noise", x))
        x = _clamp(x + chain.noise)
    if chain.dct_keep is not None:
        ops.append(("dct", x))
        x = _clamp(dct_lowpass(x, chain.dct_keep))
    if chain.dropout_keep is not None:
        ops.append(("dropout", x))

    for name, stage_in in reversed(ops):
        if name == "dropout":
            g = g * chain.dropout_keep[:, :, None]
        elif name == "dct":
            pre = dct_lowpass(stage_in, chain.dct_keep)
            g = dct_lowpass_vjp(chain.dct_keep, g * _interior(pre))
        elif name == "noise":
            g = g * _interior(stage_in + chain.noise)
        elif name == "contrast":
            g = chain.contrast * (g * _interior(chain.contrast * stage_in))
        elif name == "brightness":
            g = g * _interior(stage_in + chain.brightness)
        elif name == "affine":
            g = warp_affine_vjp(stage_in.shape, chain.affine, g)
    return g


def _interior(pre_clamp: np.ndarray) -> np.ndarray:
    """1 where the clamp is inactive (strictly inside (0, 1)), else 0."""
    return ((pre_clamp > 0.0) & (pre_clamp < 1.0)).astype(np.float64)
