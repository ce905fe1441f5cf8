# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled photon sampling kernel; mirrors ``_sampling_py``."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL
cdef double INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix(uint64_t x) noexcept nogil:
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL
    return x ^ (x >> 31)


cdef inline Py_ssize_t _bucket(const double[::1] cdf, double u) noexcept nogil:
    cdef Py_ssize_t k = 0, last = cdf.shape[0] - 1
    while k < last and not (u < cdf[k]):
        k += 1
    return k


def mix64(x):
    return np.uint64(_mix(<uint64_t>int(x)))


def uniforms(uint64_t key, Py_ssize_t start, Py_ssize_t count):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(count, dtype=np.float64)
    cdef double[::1] view = out
    cdef uint64_t base = _mix(key)
    cdef Py_ssize_t j
    with nogil:
        for j in range(count):
            view[j] = (_mix(base + <uint64_t>(start + j + 1) * GAMMA) >> 11) * INV53
    return out


def sample_outcomes(cdf, uint64_t key, Py_ssize_t start, Py_ssize_t count):
    cdef const double[::1] c = np.ascontiguousarray(cdf, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(count, dtype=np.int64)
    cdef int64_t[::1] view = out
    cdef uint64_t base = _mix(key)
    cdef Py_ssize_t j
    cdef double u
    with nogil:
        for j in range(count):
            u = (_mix(base + <uint64_t>(start + j + 1) * GAMMA) >> 11) * INV53
            view[j] = _bucket(c, u)
    return out


def sample_counts(cdf, keys, Py_ssize_t m):
    cdef const double[::1] c = np.ascontiguousarray(cdf, dtype=np.float64)
    cdef const uint64_t[::1] kv = np.ascontiguousarray(keys, dtype=np.uint64)
    cdef Py_ssize_t p, j, n = kv.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out = np.zeros((n, c.shape[0]), dtype=np.int64)
    cdef int64_t[:, ::1] view = out
    cdef uint64_t base
    cdef double u
    with nogil:
        for p in range(n):
            base = _mix(kv[p])
            for j in range(m):
                u = (_mix(base + <uint64_t>(j + 1) * GAMMA) >> 11) * INV53
                view[p, _bucket(c, u)] += 1
    return out
