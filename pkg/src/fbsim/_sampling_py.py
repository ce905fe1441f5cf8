"""Numpy implementation of the photon sampling kernel.

Must stay bit-identical to ``_sampling.pyx``: same mixer, same uniform
construction, same ``u < cdf[k]`` bucket rule.
"""
import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


def mix64(x):
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = (x ^ (x >> _S30)) * _M1
        x = (x ^ (x >> _S27)) * _M2
    return x ^ (x >> _S31)


def uniforms(key, start, count):
    """Uniforms in [0, 1) for counters start..start+count-1 of stream ``key``."""
    base = mix64(np.uint64(key))
    ctr = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = base + ctr * GAMMA
    return (mix64(x) >> _S11).astype(np.float64) * _INV53


def sample_outcomes(cdf, key, start, count):
    cdf = np.ascontiguousarray(cdf, dtype=np.float64)
    u = uniforms(key, start, count)
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(cdf) - 1).astype(np.int64)


def sample_counts(cdf, keys, m):
    """Outcome histogram for m photons on each stream in ``keys``; shape (P, K)."""
    cdf = np.ascontiguousarray(cdf, dtype=np.float64)
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    k = len(cdf)
    out = np.zeros((len(keys), k), dtype=np.int64)
    if len(keys) == 0 or m == 0:
        return out
    base = mix64(keys)[:, None]
    ctr = np.arange(1, m + 1, dtype=np.uint64)[None, :]
    with np.errstate(over="ignore"):
        x = base + ctr * GAMMA
    u = (mix64(x) >> _S11).astype(np.float64) * _INV53
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), k - 1)
    rows = np.repeat(np.arange(len(keys)), m)
    np.add.at(out, (rows, idx.ravel()), 1)
    return out
