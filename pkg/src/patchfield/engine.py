"""The joint patch optimization loop.

Per iteration: sample a patch-guided crop of the composite and a naive crop
of the target, optionally push the adversarial view through an EoT chain
(physical mode), extract ensemble features, and minimize the combined
alignment loss. Patch content takes a signed-gradient step projected onto
the L-inf budget; while the mask area exceeds the stopping threshold, the
potential field grows by the non-negative attack-improving gradient, the
binarization threshold grows by a fixed increment, and the mask is
regenerated. Once the area drops to the threshold, mask and field freeze.

Everything is a deterministic function of (inputs, config, seed).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    AttackConfig,
    PotentialField,
    as_image,
    as_mask,
    clip_budget,
    compose_adversarial,
    mask_area,
)
from .crops import sample_naive_crop, sample_patch_crop
from .eot import EotConfig, apply_chain, apply_chain_vjp, sample_chain
from .field import MorphologyConfig, build_field, generate_mask, update_field
from .losses import combined_loss_grads, cosine
from .ops.transforms import CropSpec, crop_resize, crop_resize_vjp
from .regions import RegionSet, centroid, select_region

VARIANTS = ("full", "no-svd", "no-mask-update", "no-patch-crop")


class AttackAborted(RuntimeError):
    """Run failed mid-loop; .partial carries the trace accumulated so far."""

    def __init__(self, message: str, partial: "AttackResult"):
        super().__init__(message)
        self.partial = partial


@dataclass
class TraceRow:
    iteration: int
    loss_total: float
    loss_global: float
    loss_local: float
    mask_area: int
    tau: float


@dataclass
class AttackResult:
    delta: np.ndarray
    mask: np.ndarray
    field: PotentialField
    adv: np.ndarray
    trace: list[TraceRow]
    stop_reason: str
    seed: int
    config: AttackConfig
    variant: str = "full"
    freeze_iteration: Optional[int] = None


def delta_step(delta: np.ndarray, grad: np.ndarray, step_size: float,
               scene: np.ndarray, budget: float) -> np.ndarray:
    """Signed-gradient descent step, projected onto the budget ball."""
    return clip_budget(delta - step_size * np.sign(grad), scene, budget)


def mask_gradient(grad_adv_image: np.ndarray, scene: np.ndarray,
                  delta: np.ndarray) -> np.ndarray:
    """Attack-improving gradient of the loss with respect to the mask.

    The composite is scene*(1-M) + delta*M, so dL/dM = sum_c (delta-scene)_c
    * dL/dI_adv_c; the attack-improving direction is its negation (the loss
    is minimized).
    """
    return -np.sum((delta - scene) * grad_adv_image, axis=2)


# --- physical-mode regularizers ---

_TV_EPS = 1e-8


def tv_loss(delta: np.ndarray, mask: np.ndarray) -> float:
    """Isotropic total variation of the patch content inside the mask.

    Forward differences count only where both pixels are masked; each masked
    pixel contributes sqrt(dx^2 + dy^2 + 1e-8) per channel.
    """
    delta = np.asarray(delta, dtype=np.float64)
    m = as_mask(mask)
    return _tv(delta, m)[0]


def tv_loss_grad(delta: np.ndarray, mask: np.ndarray) -> tuple[float, np.ndarray]:
    delta = np.asarray(delta, dtype=np.float64)
    m = as_mask(mask)
    return _tv(delta, m)


def _tv(delta: np.ndarray, m: np.ndarray) -> tuple[float, np.ndarray]:
    pair_x = np.zeros_like(m)
    pair_x[:, :-1] = m[:, :-1] * m[:, 1:]
    pair_y = np.zeros_like(m)
    pair_y[:-1, :] = m[:-1, :] * m[1:, :]
    total = 0.0
    grad = np.zeros_like(delta)
    for c in range(3):
        dx = np.zeros_like(m)
        dx[:, :-1] = (delta[:, 1:, c] - delta[:, :-1, c]) * pair_x[:, :-1]
        dy = np.zeros_like(m)
        dy[:-1, :] = (delta[1:, :, c] - delta[:-1, :, c]) * pair_y[:-1, :]
        r = np.sqrt(dx * dx + dy * dy + _TV_EPS)
        total += float(np.sum(r * m))
        coef_x = m * dx / r
        coef_y = m * dy / r
        grad[:, 1:, c] += coef_x[:, :-1]
        grad[:, :-1, c] -= coef_x[:, :-1]
        grad[1:, :, c] += coef_y[:-1, :]
        grad[:-1, :, c] -= coef_y[:-1, :]
    return total, grad


def nps_loss(delta: np.ndarray, mask: np.ndarray, palette: np.ndarray) -> float:
    """Sum over masked pixels of the distance to the nearest printable color."""
    return _nps(np.asarray(delta, np.float64), as_mask(mask), _check_palette(palette))[0]


def nps_loss_grad(delta: np.ndarray, mask: np.ndarray,
                  palette: np.ndarray) -> tuple[float, np.ndarray]:
    return _nps(np.asarray(delta, np.float64), as_mask(mask), _check_palette(palette))


def _check_palette(palette) -> np.ndarray:
    p = np.asarray(palette, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3 or p.shape[0] == 0:
        raise ValueError("palette must be a non-empty (P, 3) array")
    if p.min() < 0 or p.max() > 1:
        raise ValueError("palette colors must lie in [0, 1]")
    return p


def _nps(delta: np.ndarray, m: np.ndarray, palette: np.ndarray) -> tuple[float, np.ndarray]:
    diffs = delta[:, :, None, :] - palette[None, None, :, :]
    dist = np.sqrt(np.sum(diffs * diffs, axis=3))  # (H, W, P)
    idx = np.argmin(dist, axis=2)
    dmin = np.take_along_axis(dist, idx[:, :, None], axis=2)[:, :, 0]
    total = float(np.sum(dmin * m))
    nearest = palette[idx]  # (H, W, 3)
    safe = np.where(dmin > 0, dmin, 1.0)
    grad = (delta - nearest) / safe[:, :, None]
    grad *= ((dmin > 0) * m)[:, :, None]
    return total, grad


def load_palette(path) -> np.ndarray:
    """Plain-text palette: one 'r g b' triple per line, values in [0, 1]."""
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"palette line {line!r}: expected 3 values")
            rows.append([float(v) for v in parts])
    return _check_palette(np.array(rows, dtype=np.float64))


def square_mask(height: int, width: int, center: tuple[float, float], side: int) -> np.ndarray:
    """Fixed side x side square centered at p, clipped to the frame."""
    x0, y0 = center
    x_lo = int(round(x0 - side / 2.0))
    y_lo = int(round(y0 - side / 2.0))
    x_lo = min(max(x_lo, 0), max(width - side, 0))
    y_lo = min(max(y_lo, 0), max(height - side, 0))
    m = np.zeros((height, width), dtype=np.float64)
    m[y_lo:min(y_lo + side, height), x_lo:min(x_lo + side, width)] = 1.0
    return m


def iteration_loss_and_grads(
    scene: np.ndarray,
    delta: np.ndarray,
    mask: np.ndarray,
    target: np.ndarray,
    ensemble: list,
    crop_adv: CropSpec,
    crop_tar: CropSpec,
    *,
    svd_rank: int,
    local_weight: float,
    chain=None,
    use_svd: bool = True,
) -> tuple[float, float, float, np.ndarray]:
    """One alignment-loss evaluation with its gradient on the composite image.

    Returns (total, global_part, local_part, dL/dI_adv). Exposed separately
    so the assembled gradient can be checked against finite differences.
    """
    adv = compose_adversarial(scene, delta, mask)
    x_adv = crop_resize(adv, crop_adv)
    x_view = apply_chain(x_adv, chain) if chain is not None else x_adv
    x_tar = crop_resize(target, crop_tar)
    adv_bundles = [e.encode(x_view) for e in ensemble]
    tar_bundles = [e.encode(x_tar) for e in ensemble]
    total, gl, ll, cots = combined_loss_grads(
        adv_bundles, tar_bundles, svd_rank, local_weight, use_svd
    )
    cot_view = np.zeros_like(x_view)
    for e, c in zip(ensemble, cots):
        cot_view = cot_view + e.encode_vjp(x_view, c)
    cot_crop = apply_chain_vjp(x_adv, chain, cot_view) if chain is not None else cot_view
    grad_adv = crop_resize_vjp(adv.shape, crop_adv, cot_crop)
    return total, gl, ll, grad_adv


def run_attack(
    scene: np.ndarray,
    target: np.ndarray,
    region_set: RegionSet,
    ensemble: list,
    cfg: AttackConfig,
    *,
    morphology: MorphologyConfig = MorphologyConfig(),
    eot_config: Optional[EotConfig] = None,
    palette: Optional[np.ndarray] = None,
    variant: str = "full",
    region_policy: str = "explicit",
    region_scorer=None,
) -> AttackResult:
    scene = as_image(scene)
    target = as_image(target)
    if scene.shape != target.shape:
        raise ValueError(f"scene {scene.shape} and target {target.shape} differ")
    if not ensemble:
        raise ValueError("ensemble must be non-empty")
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    height, width = scene.shape[:2]
    for e in ensemble:
        if (e.spec.height, e.spec.width) != (height, width):
            raise ValueError(
                f"encoder expects {e.spec.height}x{e.spec.width}, scene is {height}x{width}"
            )

    region = select_region(region_set, region_policy, region_scorer)
    p = centroid(region)

    phi = build_field(p, cfg.field_sigma, height, width)
    tau = cfg.threshold_init
    if variant == "no-mask-update":
        mask = square_mask(height, width, p, int(round(np.sqrt(cfg.area_threshold))))
    else:
        mask = generate_mask(phi, tau, morphology)
    phi.threshold = tau

    delta = scene.copy()
    adv = compose_adversarial(scene, delta, mask)
    freeze_iteration = 0 if mask_area(mask) <= cfg.area_threshold else None

    rng = np.random.default_rng(cfg.seed)
    physical = cfg.mode == "physical"
    eot_cfg = eot_config if eot_config is not None else (EotConfig() if physical else None)
    a, b = cfg.crop_area
    trace: list[TraceRow] = []

    def partial(reason: str) -> AttackResult:
        return AttackResult(
            delta=delta, mask=mask, field=phi, adv=adv, trace=trace,
            stop_reason=reason, seed=cfg.seed, config=cfg, variant=variant,
            freeze_iteration=freeze_iteration,
        )

    for t in range(1, cfg.iterations + 1):
        if variant == "no-patch-crop":
            crop_adv = sample_naive_crop(rng, width, height, a, b, cfg.aspect_range)
        else:
            crop_adv = sample_patch_crop(rng, width, height, p, a, b, cfg.aspect_range)
        crop_tar = sample_naive_crop(rng, width, height, a, b, cfg.aspect_range)
        chain = sample_chain(rng, eot_cfg, height, width) if physical else None

        try:
            total, gl, ll, grad_adv = iteration_loss_and_grads(
                scene, delta, mask, target, ensemble, crop_adv, crop_tar,
                svd_rank=cfg.svd_rank, local_weight=cfg.local_weight,
                chain=chain, use_svd=(variant != "no-svd"),
            )
        except ConnectionError as e:
            raise AttackAborted(f"encoder transport failure at iteration {t}: {e}",
                                partial(f"aborted: {e}")) from e

        grad_delta = grad_adv * mask[:, :, None]
        if physical:
            tv, tv_g = tv_loss_grad(delta, mask)
            total += cfg.lambda_tv * tv
            grad_delta = grad_delta + cfg.lambda_tv * tv_g
            if palette is not None:
                nps, nps_g = nps_loss_grad(delta, mask, palette)
                total += cfg.lambda_nps * nps
                grad_delta = grad_delta + cfg.lambda_nps * nps_g

        delta = delta_step(delta, grad_delta, cfg.step_size, scene, cfg.budget)
        assert np.max(np.abs(delta - scene)) <= cfg.budget + 1e-12
        assert delta.min() >= 0.0 and delta.max() <= 1.0

        if variant != "no-mask-update" and mask_area(mask) > cfg.area_threshold:
            grad_field = mask_gradient(grad_adv, scene, delta)
            phi = update_field(phi, grad_field, cfg.field_lr)
            mask = generate_mask(phi, tau, morphology)
            tau += cfg.threshold_growth
            phi.threshold = tau
            if freeze_iteration is None and mask_area(mask) <= cfg.area_threshold:
                freeze_iteration = t

        adv = compose_adversarial(scene, delta, mask)
        trace.append(TraceRow(t, float(total), float(gl), float(ll),
                              mask_area(mask), float(tau)))

    return partial("completed")


def alignment_report(scene: np.ndarray, adv: np.ndarray, target: np.ndarray,
                     ensemble: list, svd_rank: int) -> list[dict]:
    """Per-encoder full-frame cosines, clean vs adversarial, global and local."""
    from .losses import local_repr

    rows = []
    for e in ensemble:
        b_clean = e.encode(scene)
        b_adv = e.encode(adv)
        b_tar = e.encode(target)
        k = min(svd_rank, min(b_clean.local_feat.shape))
        rows.append({
            "global_cos_clean": cosine(b_clean.global_feat, b_tar.global_feat),
            "global_cos_adv": cosine(b_adv.global_feat, b_tar.global_feat),
            "local_cos_clean": cosine(
                local_repr(b_clean.local_feat, k).ravel(),
                local_repr(b_tar.local_feat, k).ravel(),
            ),
            "local_cos_adv": cosine(
                local_repr(b_adv.local_feat, k).ravel(),
                local_repr(b_tar.local_feat, k).ravel(),
            ),
        })
    return rows


def evaluate_combined_loss(adv: np.ndarray, target: np.ndarray, ensemble: list,
                           svd_rank: int, local_weight: float) -> float:
    """Full-frame combined alignment loss (no crops/EoT): the standardized
    measurement used to compare runs and ablation variants."""
    from .losses import combined_loss

    adv_bundles = [e.encode(adv) for e in ensemble]
    tar_bundles = [e.encode(target) for e in ensemble]
    return combined_loss(adv_bundles, tar_bundles, svd_rank, local_weight)


def transfer_delta_cos(scene: np.ndarray, adv: np.ndarray, target: np.ndarray,
                       heldout: list) -> list[dict]:
    """Feature-space transfer proxy on held-out encoders.

    delta_cos = cos(g(adv), g(tar)) - cos(g(clean), g(tar)) per encoder.
    """
    rows = []
    for e in heldout:
        g_clean = e.encode(scene).global_feat
        g_adv = e.encode(adv).global_feat
        g_tar = e.encode(target).global_feat
        c_clean = cosine(g_clean, g_tar)
        c_adv = cosine(g_adv, g_tar)
        rows.append({
            "cos_clean": c_clean,
            "cos_adv": c_adv,
            "delta_cos": c_adv - c_clean,
        })
    return rows
