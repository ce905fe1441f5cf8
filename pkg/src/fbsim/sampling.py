"""Counter-based photon sampling with a compiled kernel when available.

Each stream is identified by a 64-bit key; photon j of a stream draws the
uniform mix(mix(key) + (j + 1) * GAMMA) / 2**64 (top 53 bits). Streams are
therefore random-access and independent of evaluation order.

Set ``FBSIM_BACKEND=python`` to force the numpy fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _sampling_py

try:
    from . import _sampling as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _sampling_py}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

_requested = os.environ.get("FBSIM_BACKEND", "").strip().lower()
if _requested and _requested not in BACKENDS:
    raise ImportError(f"FBSIM_BACKEND={_requested!r} is not available; have {sorted(BACKENDS)}")
BACKEND = _requested or ("compiled" if _compiled is not None else "python")
_kernel = BACKENDS[BACKEND]

PIXEL_MULTIPLIER = 0xD1B54A32D192ED03
_MASK64 = (1 << 64) - 1


def pixel_key(seed: int, pixel_index: int) -> int:
    """Stream key for one pixel: seed XOR (index * odd constant) mod 2**64."""
    return (seed ^ (pixel_index * PIXEL_MULTIPLIER)) & _MASK64


def cdf_from_probs(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or len(p) == 0:
        raise ValueError("need a non-empty 1-D probability vector")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("probabilities must be finite and non-negative")
    total = float(np.sum(p))
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {total}, not 1")
    cdf = np.cumsum(p / total)
    cdf[-1] = 1.0
    return cdf


def sample_counts(cdf, keys, m: int, backend: str | None = None) -> np.ndarray:
    kernel = BACKENDS[backend] if backend else _kernel
    return kernel.sample_counts(cdf, np.asarray(keys, dtype=np.uint64), int(m))


def sample_outcomes(cdf, key: int, start: int, count: int, backend: str | None = None) -> np.ndarray:
    kernel = BACKENDS[backend] if backend else _kernel
    return kernel.sample_outcomes(cdf, int(key) & _MASK64, int(start), int(count))


def uniforms(key: int, start: int, count: int, backend: str | None = None) -> np.ndarray:
    kernel = BACKENDS[backend] if backend else _kernel
    return kernel.uniforms(int(key) & _MASK64, int(start), int(count))
