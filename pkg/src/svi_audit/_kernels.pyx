# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled counterparts of ``_kernels_py``; results must match bit for bit."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t _key(uint64_t seed, uint64_t stream) nogil:
    return _mix(seed ^ _mix(stream))


def stream_key(seed, stream):
    return _key(<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF), <uint64_t>(stream & 0xFFFFFFFFFFFFFFFF))


def uniforms(seed, stream, Py_ssize_t start, Py_ssize_t count):
    cdef uint64_t key = stream_key(seed, stream)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(count, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(count):
            o[i] = <double>(_mix(key + <uint64_t>(start + i + 1) * GOLDEN) >> 11) * INV53
    return out


def uniform(seed, stream, counter):
    cdef uint64_t key = stream_key(seed, stream)
    return <double>(_mix(key + <uint64_t>(counter + 1) * GOLDEN) >> 11) * INV53


def resample_indices(seed, stream, Py_ssize_t n, Py_ssize_t resamples):
    cdef uint64_t key = stream_key(seed, stream)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out = np.empty((resamples, n), dtype=np.int64)
    cdef int64_t[:, ::1] o = out
    cdef Py_ssize_t r, j
    cdef uint64_t c, x
    with nogil:
        for r in range(resamples):
            for j in range(n):
                c = <uint64_t>(r * n + j + 1)
                x = _mix(key + c * GOLDEN)
                o[r, j] = <int64_t>(((x >> 32) * <uint64_t>n) >> 32)
    return out


def bootstrap_means(data, seed, stream, Py_ssize_t resamples):
    cdef double[::1] d = np.ascontiguousarray(data, dtype=np.float64)
    cdef Py_ssize_t n = d.shape[0]
    cdef uint64_t key = stream_key(seed, stream)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(resamples, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t r, j
    cdef uint64_t x
    cdef double acc
    with nogil:
        for r in range(resamples):
            acc = 0.0
            for j in range(n):
                x = _mix(key + <uint64_t>(r * n + j + 1) * GOLDEN)
                acc = acc + d[<Py_ssize_t>(((x >> 32) * <uint64_t>n) >> 32)]
            o[r] = acc / n
    return out


cdef double _q(const int64_t[:, :] m) nogil:
    cdef Py_ssize_t n = m.shape[0], k = m.shape[1], i, j
    cdef int64_t total = 0, denom = 0, sumsq = 0, row, col
    for i in range(n):
        row = 0
        for j in range(k):
            row += m[i, j]
        total += row
        denom += row * (k - row)
    if denom == 0:
        return 0.0
    for j in range(k):
        col = 0
        for i in range(n):
            col += m[i, j]
        sumsq += col * col
    return <double>((k - 1) * (k * sumsq - total * total)) / <double>denom


def cochran_q(matrix):
    cdef const int64_t[:, :] m = np.ascontiguousarray(matrix, dtype=np.int64)
    return _q(m)


def cochran_q_many(stack):
    cdef const int64_t[:, :, :] s = np.ascontiguousarray(stack, dtype=np.int64)
    cdef Py_ssize_t t, count = s.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(count, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for t in range(count):
            o[t] = _q(s[t])
    return out


def mann_whitney_u(a, b):
    cdef double[::1] x = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[::1] y = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef int64_t gt = 0, eq = 0
    with nogil:
        for i in range(x.shape[0]):
            for j in range(y.shape[0]):
                if x[i] > y[j]:
                    gt += 1
                elif x[i] == y[j]:
                    eq += 1
    return <double>gt + 0.5 * <double>eq
