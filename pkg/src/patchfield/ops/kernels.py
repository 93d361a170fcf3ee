"""Backend selection for the bilinear kernels.

The compiled extension is preferred; the numpy fallback is selected when the
extension is unavailable or PATCHFIELD_FORCE_NUMPY=1 is set. Both backends
implement the same gather/scatter contract and agree numerically.
"""

import os

import numpy as np

from . import _kernels_np

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

if os.environ.get("PATCHFIELD_FORCE_NUMPY") == "1" or _compiled is None:
    _impl = _kernels_np
    BACKEND = "numpy"
else:
    _impl = _compiled
    BACKEND = "compiled"


def backend_name() -> str:
    return BACKEND


def available_backends() -> dict:
    """Name -> module map, for tests and the kernel benchmark."""
    backends = {"numpy": _kernels_np}
    if _compiled is not None:
        backends["compiled"] = _compiled
    return backends


def bilinear_gather(src, ys, xs):
    """Sample src (H, W, C) at fractional (ys, xs); out-of-frame taps read 0."""
    src = np.ascontiguousarray(src, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    return _impl.bilinear_gather(src, ys, xs)


def bilinear_scatter(cot, ys, xs, h, w):
    """Adjoint of bilinear_gather: accumulate (N, C) cotangents into (h, w, C)."""
    cot = np.ascontiguousarray(cot, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    return _impl.bilinear_scatter(cot, ys, xs, int(h), int(w))
