"""Independent reference implementations used to pin expected test values.

These deliberately avoid the code paths they check: the eigensolver is a
hand-rolled cyclic Jacobi (not LAPACK), bilinear sampling and convolution
are direct per-point formula evaluations, and gradients come from central
finite differences.
"""

import numpy as np


def jacobi_eigh(A, max_sweeps=100, tol=1e-14):
    """Cyclic Jacobi eigensolver for a symmetric matrix.

    Returns (eigenvalues, eigenvectors) sorted by descending eigenvalue,
    eigenvectors in columns.
    """
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    V = np.eye(n)
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(A**2) - np.sum(np.diag(A) ** 2), 0.0))
        if off <= tol * max(1.0, np.sqrt(np.sum(np.diag(A) ** 2))):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) <= 1e-300:
                    continue
                diff = A[q, q] - A[p, p]
                if abs(diff) > 1e150 * abs(A[p, q]):
                    continue  # rotation angle below representable resolution
                theta = diff / (2.0 * A[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                Ap = A[:, p].copy()
                Aq = A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap = A[p, :].copy()
                Aq = A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                Vp = V[:, p].copy()
                Vq = V[:, q].copy()
                V[:, p] = c * Vp - s * Vq
                V[:, q] = s * Vp + c * Vq
    order = np.argsort(-np.diag(A))
    return np.diag(A)[order], V[:, order]


def singular_values_jacobi(X):
    """All singular values of X, descending, via Jacobi on the Gram matrix."""
    X = np.asarray(X, dtype=np.float64)
    gram = X.T @ X if X.shape[0] >= X.shape[1] else X @ X.T
    vals, _ = jacobi_eigh(gram)
    return np.sqrt(np.maximum(vals, 0.0))


def svd_factors_jacobi(X, k):
    """Rank-k factors (U, S, V) with the same sign convention as the library:
    the largest-magnitude entry of each U column is positive."""
    X = np.asarray(X, dtype=np.float64)
    m, d = X.shape
    if m >= d:
        vals, V = jacobi_eigh(X.T @ X)
        S = np.sqrt(np.maximum(vals, 0.0))
        U = X @ V[:, :k] / S[:k][None, :]
        V = V[:, :k]
    else:
        vals, U = jacobi_eigh(X @ X.T)
        S = np.sqrt(np.maximum(vals, 0.0))
        U = U[:, :k]
        V = X.T @ U / S[:k][None, :]
    U = U.copy()
    V = V.copy()
    for j in range(k):
        i = int(np.argmax(np.abs(U[:, j])))
        if U[i, j] < 0:
            U[:, j] = -U[:, j]
            V[:, j] = -V[:, j]
    return U, S[:k].copy(), V


def bilinear_point(img, y, x):
    """Direct bilinear formula at one fractional point; out-of-frame taps read 0."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    y0, x0 = int(np.floor(y)), int(np.floor(x))
    out = np.zeros(img.shape[2])
    for dy, wy in ((0, 1.0 - (y - y0)), (1, y - y0)):
        for dx, wx in ((0, 1.0 - (x - x0)), (1, x - x0)):
            yy, xx = y0 + dy, x0 + dx
            if 0 <= yy < h and 0 <= xx < w:
                out += wy * wx * img[yy, xx]
    return out


def direct_conv3x3(img, kernel):
    """Five-loop 3x3 convolution with zero padding; kernel (out, in, ky, kx)."""
    img = np.asarray(img, dtype=np.float64)
    h, w, cin = img.shape
    cout = kernel.shape[0]
    out = np.zeros((h, w, cout))
    for y in range(h):
        for x in range(w):
            for o in range(cout):
                acc = 0.0
                for ky in range(3):
                    for kx in range(3):
                        yy, xx = y + ky - 1, x + kx - 1
                        if 0 <= yy < h and 0 <= xx < w:
                            for c in range(cin):
                                acc += kernel[o, c, ky, kx] * img[yy, xx, c]
                out[y, x, o] = acc
    return out


def central_diff(f, x, h=1e-6):
    """Central finite-difference gradient of a scalar function of an array."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a.ravel()), np.linalg.norm(b.ravel()), 1e-300)
    return np.linalg.norm((a - b).ravel()) / denom
