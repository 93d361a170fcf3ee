"""Model adapters served over the bridge.

An adapter provides:

    describe()                 -> dict with h, w, m, d, d_g, grid_rows,
                                  grid_cols, seed
    forward(img)               -> (global_vec (d_g,), local_mat (m, d))
    vjp(img, cot_g, cot_local) -> (h, w, 3) image gradient
    score_regions(img, regions)-> {region_id: score}   (optional)

The reference adapter reproduces the engine's seeded linear encoder exactly
(same weight draws, pooling, centering, and gain), so a seed-matched client
must agree with its in-process encoder up to float32 wire precision:

    rng      = numpy.random.default_rng(seed)
    n        = (patch_h // pool) * (patch_w // pool) * 3
    w_token  = rng.standard_normal((dim, n)) / sqrt(n)
    w_global = rng.standard_normal((global_dim, dim)) / sqrt(dim)
    v_j      = mean-pool of patch j by pool x pool blocks, flattened
    token_j  = gain * (w_token @ (v_j - mean(v_j)))
    global   = w_global @ mean_j(token_j)
"""

from __future__ import annotations

import importlib

import numpy as np


class ReferenceLinearAdapter:
    def __init__(self, h=64, w=64, rows=8, cols=8, dim=32, gdim=32,
                 seed=0, gain=1.0, pool=1):
        if h % rows or w % cols:
            raise ValueError(f"{h}x{w} not divisible by grid {rows}x{cols}")
        self.h, self.w = int(h), int(w)
        self.rows, self.cols = int(rows), int(cols)
        self.dim, self.gdim = int(dim), int(gdim)
        self.seed = int(seed)
        self.gain = float(gain)
        self.pool = int(pool)
        self.ph = self.h // self.rows
        self.pw = self.w // self.cols
        if self.ph % self.pool or self.pw % self.pool:
            raise ValueError(f"pool {pool} must divide the {self.ph}x{self.pw} patch")
        n = (self.ph // self.pool) * (self.pw // self.pool) * 3
        rng = np.random.default_rng(self.seed)
        self.w_token = rng.standard_normal((self.dim, n)) / np.sqrt(n)
        self.w_global = rng.standard_normal((self.gdim, self.dim)) / np.sqrt(self.dim)

    @property
    def tokens(self):
        return self.rows * self.cols

    def describe(self) -> dict:
        return {"h": self.h, "w": self.w, "m": self.tokens, "d": self.dim,
                "d_g": self.gdim, "grid_rows": self.rows, "grid_cols": self.cols,
                "seed": self.seed}

    def _pooled_patches(self, img: np.ndarray) -> np.ndarray:
        q = self.pool
        p = img.reshape(self.rows, self.ph, self.cols, self.pw, 3)
        p = np.einsum("rhcwk->rchwk", p)
        p = p.reshape(self.tokens, self.ph // q, q, self.pw // q, q, 3).mean(axis=(2, 4))
        return p.reshape(self.tokens, -1)

    def forward(self, img: np.ndarray):
        v = self._pooled_patches(img)
        v = v - v.mean(axis=1, keepdims=True)
        local = self.gain * (v @ self.w_token.T)
        return self.w_global @ local.mean(axis=0), local

    def vjp(self, img: np.ndarray, cot_g: np.ndarray, cot_local: np.ndarray):
        grad_local = cot_local + np.outer(np.ones(self.tokens),
                                          self.w_global.T @ cot_g) / self.tokens
        grad_v = self.gain * (grad_local @ self.w_token)
        grad_v = grad_v - grad_v.mean(axis=1, keepdims=True)
        q = self.pool
        g = grad_v.reshape(self.tokens, self.ph // q, 1, self.pw // q, 1, 3) / (q * q)
        g = np.broadcast_to(
            g, (self.tokens, self.ph // q, q, self.pw // q, q, 3)
        ).reshape(self.rows, self.cols, self.ph, self.pw, 3)
        g = np.einsum("rchwk->rhcwk", g)
        return g.reshape(self.h, self.w, 3)

    def score_regions(self, img: np.ndarray, regions: list[dict]) -> dict:
        """Deterministic placement prior: big regions low in the frame win."""
        scores = {}
        for r in regions:
            x, y, w, h = r["bbox"]
            cy = y + h / 2.0
            scores[int(r["id"])] = float(
                np.sqrt(w * h / (self.w * self.h)) * (cy / self.h)
            )
        return scores


def load_adapter(spec: str):
    """Build an adapter from a CLI spec string.

    reference[:k=v,...]     seeded reference linear encoder
    module:pkg.mod:factory  import pkg.mod and call factory()
    """
    if spec == "reference" or spec.startswith("reference:"):
        kwargs = {}
        if ":" in spec:
            for item in spec.split(":", 1)[1].split(","):
                if not item:
                    continue
                key, _, value = item.partition("=")
                kwargs[key.strip()] = float(value) if "." in value else int(value)
        return ReferenceLinearAdapter(**kwargs)
    if spec.startswith("module:"):
        _, mod_name, attr = spec.split(":", 2)
        factory = getattr(importlib.import_module(mod_name), attr)
        return factory()
    raise ValueError(f"unknown adapter spec {spec!r}")
