"""Dense float64 kernels with a compiled fast path.

The compiled extension (:mod:`phsearch._kernels`) is preferred when it can be
imported; set ``PHS_KERNELS=python`` (or call :func:`set_backend`) to force
the NumPy fallback.  Both backends satisfy identical contracts and agree to
roughly 1e-12.  Within one backend every operation is deterministic and
row-decomposable: a row of the output depends only on the matching row of the
input, which makes recomputing a single cached row bit-exact against the full
matrix pass.

All functions accept array-likes and coerce to C-ordered float64.
"""

from __future__ import annotations

import logging
import math
import os

import numpy as np

from . import _kernels_py
from .errors import BadParam, DimensionMismatch

log = logging.getLogger(__name__)

_BACKENDS = {"python": _kernels_py}
try:
    from . import _kernels as _kernels_ext

    _BACKENDS["cython"] = _kernels_ext
except ImportError:  # pure checkout or failed build: fallback only
    _kernels_ext = None


def _initial_backend():
    requested = os.environ.get("PHS_KERNELS", "auto")
    if requested == "auto":
        return _BACKENDS.get("cython", _kernels_py)
    if requested not in _BACKENDS:
        if requested == "cython":
            log.warning("compiled kernels unavailable, using python backend")
            return _kernels_py
        raise BadParam(f"unknown kernel backend {requested!r}")
    return _BACKENDS[requested]


_impl = _initial_backend()


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def active_backend() -> str:
    return _impl.NAME


def set_backend(name: str) -> str:
    """Switch the kernel backend at runtime; returns the previous name."""
    global _impl
    if name not in _BACKENDS:
        raise BadParam(f"unknown kernel backend {name!r} (have {available_backends()})")
    previous = _impl.NAME
    _impl = _BACKENDS[name]
    return previous


def _as2d(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def _as1d(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def ensure_finite(a, name: str = "array") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise BadParam(f"{name} contains non-finite entries")
    return arr


def matmul(a, b) -> np.ndarray:
    """Standard matrix product; raises DimensionMismatch on inner-dim conflict."""
    a2 = _as2d(a, "a")
    b2 = _as2d(b, "b")
    if a2.shape[1] != b2.shape[0]:
        raise DimensionMismatch(
            f"matmul inner dims differ: {a2.shape} x {b2.shape}"
        )
    return _impl.matmul(a2, b2)


def affine(x, w, b) -> np.ndarray:
    """x @ w + b with b broadcast over rows."""
    out = matmul(x, w)
    return out + _as1d(b, "b")


def softmax_rows(m) -> np.ndarray:
    """Row-wise softmax with per-row max subtraction; rows sum to 1."""
    return _impl.softmax_rows(_as2d(m, "m"))


def layer_norm_rows(m, gamma, beta, eps: float = 1e-6) -> np.ndarray:
    """Row-wise layer normalization with population variance, then affine."""
    m2 = _as2d(m, "m")
    g = _as1d(gamma, "gamma")
    bt = _as1d(beta, "beta")
    if not (m2.shape[1] == g.shape[0] == bt.shape[0]):
        raise DimensionMismatch(
            f"layer_norm dims differ: x cols {m2.shape[1]}, gamma {g.shape[0]}, beta {bt.shape[0]}"
        )
    if not eps > 0:
        raise BadParam("eps must be positive")
    return _impl.layer_norm_rows(m2, g, bt, eps)


def layer_norm(x, gamma, beta, eps: float = 1e-6) -> np.ndarray:
    """Vector layer normalization; same kernel as the row variant."""
    v = _as1d(x, "x")
    return layer_norm_rows(v[None, :], gamma, beta, eps)[0]


def gelu(x) -> np.ndarray:
    """Exact Gaussian-CDF GELU, elementwise over any array shape."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    return _impl.gelu_flat(arr.ravel()).reshape(arr.shape)


def gelu_scalar(x: float) -> float:
    return 0.5 * x * (1.0 + math.erf(x / math.sqrt(2.0)))
