"""Feature-alignment losses and the truncated SVD they are built on.

The global term sums (1 - cosine) between global feature vectors per encoder.
The local term compresses each encoder's m x d token matrix X to f = U_k S_k
(left singular vectors scaled by singular values, the optimal rank-k
compression in Frobenius norm) and sums (1 - cosine) between the row-major
flattenings of the compressed matrices. The combined objective is
global + local_weight * local, and the engine MINIMIZES it.

Raw SVD sign ambiguity would make the local loss non-deterministic, so each
U column is sign-fixed: the entry of largest magnitude is made positive
(ties resolved to the lowest row index), with the matching V column flipped
to preserve X = U S V^T.

The reverse-mode rule for the truncated factorization couples kept and
discarded singular triples through 1/(s_j^2 - s_i^2) terms; near-degenerate
pairs are guarded by a sign-preserving floor and counted in a module
diagnostic rather than raised, so optimization stays total on synthetic data
with spectrum crossings.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .encoders import FeatureBundle

# Count of guarded near-degenerate denominators since import/reset.
svd_guard_events = 0


def reset_svd_guard_count() -> None:
    global svd_guard_events
    svd_guard_events = 0


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; degenerate (zero) vectors give 0 with a warning."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        warnings.warn("cosine of a zero vector; returning 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def cosine_grad(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """d cosine(u, v) / du with v held fixed; zero for degenerate inputs."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return np.zeros_like(u)
    c = np.dot(u, v) / (nu * nv)
    return v / (nu * nv) - c * u / (nu * nu)


@dataclass
class SvdFactors:
    U: np.ndarray  # (m, k), column-orthonormal
    S: np.ndarray  # (k,), non-increasing, >= 0
    V: np.ndarray  # (d, k), column-orthonormal


def _fix_signs(U: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Largest-magnitude entry of each U column made positive (V flipped along)."""
    U = U.copy()
    V = V.copy()
    for j in range(U.shape[1]):
        i = int(np.argmax(np.abs(U[:, j])))  # argmax takes the lowest index on ties
        if U[i, j] < 0:
            U[:, j] = -U[:, j]
            V[:, j] = -V[:, j]
    return U, V


def truncated_svd(X: np.ndarray, k: int) -> SvdFactors:
    X = np.asarray(X, dtype=np.float64)
    m, d = X.shape
    if k > min(m, d):
        raise ValueError(f"rank {k} exceeds min{(m, d)}")
    if k < 1:
        raise ValueError("rank must be >= 1")
    U, S, Vt = np.linalg.svd(X, full_matrices=False)
    U, V = _fix_signs(U[:, :k], Vt[:k, :].T)
    return SvdFactors(U, S[:k].copy(), V)


def local_repr(X: np.ndarray, k: int) -> np.ndarray:
    """Token-indexed compressed representation U * diag(S), shape (m, k)."""
    f = truncated_svd(X, k)
    return f.U * f.S[None, :]


def svd_vjp(X: np.ndarray, k: int, factors: SvdFactors | None,
            cot_U: np.ndarray, cot_S: np.ndarray) -> np.ndarray:
    """Cotangent on X from cotangents on the truncated (U, S).

    Recomputes the full thin SVD internally (sign-fixed on the leading k
    columns so it matches truncated_svd) and applies the reverse rule with
    zero cotangents on the discarded columns:

        Xbar = U [(F o (U^T Ubar - Ubar^T U)) S] V^T
             + (I - U U^T) Ubar S^{-1} V^T
             + U diag(Sbar) V^T,   F_ij = 1 / (s_j^2 - s_i^2)   (i != j)

    Denominators with |s_j^2 - s_i^2| < 1e-9 * s_max^2 are replaced by a
    sign-preserving +/-1e-9 * s_max^2 and counted in svd_guard_events.
    """
    global svd_guard_events
    X = np.asarray(X, dtype=np.float64)
    m, d = X.shape
    r = min(m, d)
    if k > r:
        raise ValueError(f"rank {k} exceeds min{(m, d)}")
    U, S, Vt = np.linalg.svd(X, full_matrices=False)
    Uf, Vf = _fix_signs(U[:, :k], Vt[:k, :].T)
    U = U.copy()
    Vt = Vt.copy()
    U[:, :k] = Uf
    Vt[:k, :] = Vf.T
    V = Vt.T

    dU = np.zeros((m, r), dtype=np.float64)
    dU[:, :k] = np.asarray(cot_U, dtype=np.float64)
    dS = np.zeros(r, dtype=np.float64)
    dS[:k] = np.asarray(cot_S, dtype=np.float64)

    s_max2 = float(S[0] * S[0]) if S.size else 0.0
    floor = 1e-9 * s_max2 if s_max2 > 0 else 1e-300
    s2 = S * S
    denom = s2[None, :] - s2[:, None]  # denom[i, j] = s_j^2 - s_i^2
    off = ~np.eye(r, dtype=bool)
    small = (np.abs(denom) < floor) & off
    if np.any(small):
        svd_guard_events += int(np.count_nonzero(small))
        denom = np.where(small, np.where(denom >= 0, floor, -floor), denom)
    F = np.zeros_like(denom)
    F[off] = 1.0 / denom[off]

    P = U.T @ dU
    G = F * (P - P.T)
    term_rot = U @ (G * S[None, :]) @ Vt

    s_safe = np.maximum(S, np.sqrt(floor) if s_max2 > 0 else 1e-300)
    proj = dU - U @ P
    term_perp = (proj / s_safe[None, :]) @ Vt

    term_sigma = (U * dS[None, :]) @ Vt
    return term_rot + term_perp + term_sigma


def global_loss(adv: list[FeatureBundle], tar: list[FeatureBundle]) -> float:
    """Sum over encoders of 1 - cosine between global features."""
    if len(adv) != len(tar):
        raise ValueError(f"bundle count mismatch: {len(adv)} vs {len(tar)}")
    return float(sum(1.0 - cosine(a.global_feat, t.global_feat) for a, t in zip(adv, tar)))


def local_loss(adv: list[FeatureBundle], tar: list[FeatureBundle],
               k: int, use_svd: bool = True) -> float:
    """Sum over encoders of 1 - cosine between compressed token matrices.

    use_svd=False compares the raw token matrices instead (ablation mode).
    """
    if len(adv) != len(tar):
        raise ValueError(f"bundle count mismatch: {len(adv)} vs {len(tar)}")
    total = 0.0
    for a, t in zip(adv, tar):
        if use_svd:
            fa = local_repr(a.local_feat, k)
            ft = local_repr(t.local_feat, k)
        else:
            fa, ft = a.local_feat, t.local_feat
        total += 1.0 - cosine(fa.ravel(), ft.ravel())
    return float(total)


def combined_loss(adv: list[FeatureBundle], tar: list[FeatureBundle],
                  k: int, local_weight: float, use_svd: bool = True) -> float:
    if local_weight < 0:
        raise ValueError("local_weight must be >= 0")
    return global_loss(adv, tar) + local_weight * local_loss(adv, tar, k, use_svd)


def combined_loss_grads(
    adv: list[FeatureBundle],
    tar: list[FeatureBundle],
    k: int,
    local_weight: float,
    use_svd: bool = True,
) -> tuple[float, float, float, list[FeatureBundle]]:
    """Loss values plus the cotangent on each adversarial bundle.

    Returns (total, global_part, local_part, cotangents); target features are
    treated as constants.
    """
    if len(adv) != len(tar):
        raise ValueError(f"bundle count mismatch: {len(adv)} vs {len(tar)}")
    if local_weight < 0:
        raise ValueError("local_weight must be >= 0")
    gl = 0.0
    ll = 0.0
    cots = []
    for a, t in zip(adv, tar):
        gl += 1.0 - cosine(a.global_feat, t.global_feat)
        cot_g = -cosine_grad(a.global_feat, t.global_feat)

        X = np.asarray(a.local_feat, dtype=np.float64)
        Xt = np.asarray(t.local_feat, dtype=np.float64)
        if use_svd:
            fac = truncated_svd(X, k)
            fa = fac.U * fac.S[None, :]
            ft = local_repr(Xt, k)
            ll += 1.0 - cosine(fa.ravel(), ft.ravel())
            cot_f = -cosine_grad(fa.ravel(), ft.ravel()).reshape(fa.shape)
            cot_U = cot_f * fac.S[None, :]
            cot_S = np.einsum("mk,mk->k", cot_f, fac.U)
            cot_X = svd_vjp(X, k, fac, cot_U, cot_S)
        else:
            ll += 1.0 - cosine(X.ravel(), Xt.ravel())
            cot_X = -cosine_grad(X.ravel(), Xt.ravel()).reshape(X.shape)
        cots.append(FeatureBundle(cot_g, local_weight * cot_X))
    total = gl + local_weight * ll
    return float(total), float(gl), float(ll), cots
