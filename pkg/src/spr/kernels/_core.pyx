# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled scoring kernels. Same contracts as the numpy fallback."""

import numpy as np

cimport numpy as cnp


def dot_scores(const float[:, ::1] matrix, const float[::1] query):
    cdef Py_ssize_t n = matrix.shape[0]
    cdef Py_ssize_t d = matrix.shape[1]
    cdef Py_ssize_t i, j
    cdef double acc
    out = np.empty(n, dtype=np.float32)
    cdef float[::1] ov = out
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(d):
                acc += matrix[i, j] * query[j]
            ov[i] = <float> acc
    return out


def group_dot(
    const float[:, ::1] vectors,
    const long long[::1] offsets,
    const long long[::1] lists,
    const float[::1] query,
):
    cdef Py_ssize_t d = vectors.shape[1]
    cdef Py_ssize_t n_lists = lists.shape[0]
    cdef Py_ssize_t li, g, r, j, pos
    cdef Py_ssize_t total = 0
    cdef double acc
    for li in range(n_lists):
        g = <Py_ssize_t> lists[li]
        total += <Py_ssize_t> (offsets[g + 1] - offsets[g])
    out = np.empty(total, dtype=np.float32)
    cdef float[::1] ov = out
    pos = 0
    with nogil:
        for li in range(n_lists):
            g = <Py_ssize_t> lists[li]
            for r in range(<Py_ssize_t> offsets[g], <Py_ssize_t> offsets[g + 1]):
                acc = 0.0
                for j in range(d):
                    acc += vectors[r, j] * query[j]
                ov[pos] = <float> acc
                pos += 1
    return out


def adc_scan(const float[:, ::1] lut, const unsigned char[:, ::1] codes, double base):
    cdef Py_ssize_t n = codes.shape[0]
    cdef Py_ssize_t m = codes.shape[1]
    cdef Py_ssize_t i, j
    cdef double acc
    out = np.empty(n, dtype=np.float32)
    cdef float[::1] ov = out
    with nogil:
        for i in range(n):
            acc = base
            for j in range(m):
                acc += lut[j, codes[i, j]]
            ov[i] = <float> acc
    return out
