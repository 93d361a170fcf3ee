"""Surrogate encoder ensemble: deterministic toy encoders plus a bridge client.

Each encoder maps an (H, W, 3) image to a FeatureBundle: a global vector
(the [CLS]-role feature) and an m x d matrix of token features on a fixed
grid. Toy encoders are linear by default, so their vjps are exact transposes
and every gradient test can be run at machine precision; the tanh variant
adds a smooth nonlinearity for realism. Patch vectors are mean-centered
before projection (and the conv kernel is zero-sum per output channel), so
features respond to structure rather than to the DC level every image
shares; without this, any two mid-gray images sit at cosine ~0.99 and there
is nothing for an attack to move. All weights are frozen functions of the
spec seed:

    rng = numpy.random.default_rng(seed)
    n        = (patch_h // pool) * (patch_w // pool) * 3
    w_token  = rng.standard_normal((dim, n)) / sqrt(n)
    w_global = rng.standard_normal((global_dim, dim)) / sqrt(dim)
    v_j      = mean-pool each patch by pool x pool blocks, flatten row-major
    token_j  = gain * (w_token @ (v_j - mean(v_j)))

    (toy-conv first draws w_conv = rng.standard_normal((8, 3, 3, 3)) / sqrt(27),
     then subtracts its per-output-channel mean; tokens are projections of
     cell-averaged conv maps, uncentered and unpooled)

The spec gain rescales pre-activations; it only changes behavior for the
tanh kind, where it sets how quickly strong content saturates. pool > 1
makes features depend on coarse patch structure only, which keeps them
stable under crop-resize zoom the way downsampling stages do in real
encoders.

This draw order is the cross-implementation contract the bridge server's
reference adapter replicates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CONV_CHANNELS = 8


@dataclass(frozen=True)
class EncoderSpec:
    height: int
    width: int
    grid_rows: int
    grid_cols: int
    dim: int
    global_dim: int
    kind: str = "toy-linear"
    seed: int = 0
    gain: float = 1.0
    pool: int = 1

    @property
    def tokens(self) -> int:
        return self.grid_rows * self.grid_cols

    def __post_init__(self):
        if self.kind not in ("toy-linear", "toy-conv", "toy-tanh", "bridged"):
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if min(self.height, self.width, self.grid_rows, self.grid_cols,
               self.dim, self.global_dim) < 1:
            raise ValueError("encoder dims must be >= 1")
        if self.gain <= 0:
            raise ValueError("gain must be > 0")
        ph = self.height // self.grid_rows
        pw = self.width // self.grid_cols
        if self.pool < 1 or ph % self.pool or pw % self.pool:
            raise ValueError(
                f"pool {self.pool} must divide the {ph}x{pw} patch"
            )
        if self.height % self.grid_rows or self.width % self.grid_cols:
            raise ValueError(
                f"image {self.height}x{self.width} not divisible by "
                f"token grid {self.grid_rows}x{self.grid_cols}"
            )


@dataclass
class FeatureBundle:
    global_feat: np.ndarray  # (global_dim,)
    local_feat: np.ndarray   # (tokens, dim)


def _check_input(spec: EncoderSpec, img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.shape != (spec.height, spec.width, 3):
        raise ValueError(f"encoder expects {(spec.height, spec.width, 3)}, got {img.shape}")
    return img


def _to_patches(spec: EncoderSpec, img: np.ndarray) -> np.ndarray:
    """(H, W, 3) -> (tokens, ph, pw, 3), row-major token order."""
    ph = spec.height // spec.grid_rows
    pw = spec.width // spec.grid_cols
    p = img.reshape(spec.grid_rows, ph, spec.grid_cols, pw, 3)
    return p.transpose(0, 2, 1, 3, 4).reshape(spec.tokens, ph, pw, 3)


def _from_patches(spec: EncoderSpec, patches: np.ndarray) -> np.ndarray:
    ph = spec.height // spec.grid_rows
    pw = spec.width // spec.grid_cols
    p = patches.reshape(spec.grid_rows, spec.grid_cols, ph, pw, 3)
    return p.transpose(0, 2, 1, 3, 4).reshape(spec.height, spec.width, 3)


class ToyLinearEncoder:
    """Seeded linear projection per non-overlapping patch + mean-pooled head."""

    def __init__(self, spec: EncoderSpec, nonlinear: bool = False):
        self.spec = spec
        self.nonlinear = nonlinear
        self.ph = spec.height // spec.grid_rows
        self.pw = spec.width // spec.grid_cols
        n = (self.ph // spec.pool) * (self.pw // spec.pool) * 3
        rng = np.random.default_rng(spec.seed)
        self.w_token = rng.standard_normal((spec.dim, n)) / np.sqrt(n)
        self.w_global = rng.standard_normal((spec.global_dim, spec.dim)) / np.sqrt(spec.dim)

    def _pool_patches(self, patches: np.ndarray) -> np.ndarray:
        q = self.spec.pool
        m = patches.shape[0]
        v = patches.reshape(m, self.ph // q, q, self.pw // q, q, 3).mean(axis=(2, 4))
        return v.reshape(m, -1)

    def _pool_patches_vjp(self, grad_v: np.ndarray) -> np.ndarray:
        q = self.spec.pool
        m = grad_v.shape[0]
        g = grad_v.reshape(m, self.ph // q, 1, self.pw // q, 1, 3) / (q * q)
        g = np.broadcast_to(g, (m, self.ph // q, q, self.pw // q, q, 3))
        return g.reshape(m, self.ph, self.pw, 3)

    def _tokens(self, img: np.ndarray) -> np.ndarray:
        v = self._pool_patches(_to_patches(self.spec, img))
        v = v - v.mean(axis=1, keepdims=True)
        return self.spec.gain * (v @ self.w_token.T)

    def encode(self, img: np.ndarray) -> FeatureBundle:
        img = _check_input(self.spec, img)
        tokens = self._tokens(img)
        local = np.tanh(tokens) if self.nonlinear else tokens
        return FeatureBundle(self.w_global @ local.mean(axis=0), local)

    def encode_vjp(self, img: np.ndarray, cot: FeatureBundle) -> np.ndarray:
        img = _check_input(self.spec, img)
        m = self.spec.tokens
        grad_local = np.asarray(cot.local_feat, dtype=np.float64) \
            + (self.w_global.T @ np.asarray(cot.global_feat, dtype=np.float64))[None, :] / m
        if self.nonlinear:
            grad_local = grad_local * (1.0 - np.tanh(self._tokens(img)) ** 2)
        grad_v = self.spec.gain * (grad_local @ self.w_token)
        grad_v = grad_v - grad_v.mean(axis=1, keepdims=True)  # centering is symmetric
        return _from_patches(self.spec, self._pool_patches_vjp(grad_v))


class ToyConvEncoder:
    """One seeded 3x3 convolution, per-cell average pooling, linear head."""

    def __init__(self, spec: EncoderSpec):
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        self.w_conv = rng.standard_normal((CONV_CHANNELS, 3, 3, 3)) / np.sqrt(27.0)
        self.w_conv -= self.w_conv.mean(axis=(1, 2, 3), keepdims=True)  # zero DC response
        self.w_token = rng.standard_normal((spec.dim, CONV_CHANNELS)) / np.sqrt(CONV_CHANNELS)
        self.w_global = rng.standard_normal((spec.global_dim, spec.dim)) / np.sqrt(spec.dim)

    def _conv(self, img: np.ndarray) -> np.ndarray:
        h, w = self.spec.height, self.spec.width
        pad = np.zeros((h + 2, w + 2, 3), dtype=np.float64)
        pad[1:-1, 1:-1] = img
        shifts = np.stack(
            [pad[dy:dy + h, dx:dx + w, :] for dy in range(3) for dx in range(3)]
        )  # (9, H, W, 3)
        # w_conv is (out, in, ky, kx); index k = ky*3 + kx
        wk = self.w_conv.transpose(0, 2, 3, 1).reshape(CONV_CHANNELS, 9, 3)
        return np.einsum("khwc,okc->hwo", shifts, wk)

    def _conv_vjp(self, grad_fm: np.ndarray) -> np.ndarray:
        h, w = self.spec.height, self.spec.width
        wk = self.w_conv.transpose(0, 2, 3, 1).reshape(CONV_CHANNELS, 9, 3)
        grad_shifts = np.einsum("hwo,okc->khwc", grad_fm, wk)
        grad_pad = np.zeros((h + 2, w + 2, 3), dtype=np.float64)
        k = 0
        for dy in range(3):
            for dx in range(3):
                grad_pad[dy:dy + h, dx:dx + w, :] += grad_shifts[k]
                k += 1
        return grad_pad[1:-1, 1:-1]

    def _pool(self, fm: np.ndarray) -> np.ndarray:
        r, c = self.spec.grid_rows, self.spec.grid_cols
        ch = self.spec.height // r
        cw = self.spec.width // c
        cells = fm.reshape(r, ch, c, cw, CONV_CHANNELS).mean(axis=(1, 3))
        return cells.reshape(self.spec.tokens, CONV_CHANNELS)

    def _pool_vjp(self, grad_cells: np.ndarray) -> np.ndarray:
        r, c = self.spec.grid_rows, self.spec.grid_cols
        ch = self.spec.height // r
        cw = self.spec.width // c
        g = grad_cells.reshape(r, c, CONV_CHANNELS) / (ch * cw)
        return np.broadcast_to(
            g[:, None, :, None, :], (r, ch, c, cw, CONV_CHANNELS)
        ).reshape(self.spec.height, self.spec.width, CONV_CHANNELS)

    def encode(self, img: np.ndarray) -> FeatureBundle:
        img = _check_input(self.spec, img)
        local = self.spec.gain * (self._pool(self._conv(img)) @ self.w_token.T)
        return FeatureBundle(self.w_global @ local.mean(axis=0), local)

    def encode_vjp(self, img: np.ndarray, cot: FeatureBundle) -> np.ndarray:
        _check_input(self.spec, img)
        m = self.spec.tokens
        grad_local = np.asarray(cot.local_feat, dtype=np.float64) \
            + (self.w_global.T @ np.asarray(cot.global_feat, dtype=np.float64))[None, :] / m
        grad_cells = self.spec.gain * (grad_local @ self.w_token)
        return self._conv_vjp(self._pool_vjp(grad_cells))


def make_toy_encoder(spec: EncoderSpec):
    if spec.kind == "toy-linear":
        return ToyLinearEncoder(spec)
    if spec.kind == "toy-tanh":
        return ToyLinearEncoder(spec, nonlinear=True)
    if spec.kind == "toy-conv":
        return ToyConvEncoder(spec)
    raise ValueError(f"not a toy encoder kind: {spec.kind!r}")


def encode(encoder, img: np.ndarray) -> FeatureBundle:
    return encoder.encode(img)


def encode_vjp(encoder, img: np.ndarray, cot: FeatureBundle) -> np.ndarray:
    return encoder.encode_vjp(img, cot)


def connect_bridge_encoder(endpoint: str):
    """Encoder served over the wire protocol; see patchfield.bridge."""
    from .bridge import BridgedEncoder

    return BridgedEncoder(endpoint)
