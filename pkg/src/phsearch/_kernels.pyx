# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled float64 kernels: matrix product, row softmax, row layer norm, GELU.

Every kernel computes an output row from its input row alone with a fixed
left-to-right accumulation order, so a row's result does not change when
other rows are present.  Cached single-row recomputation relies on this.
"""

from libc.math cimport erf, exp, sqrt

import numpy as np

NAME = "cython"


def matmul(double[:, :] a, double[:, :] b):
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1], p = b.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double aik
    out = np.zeros((n, p), dtype=np.float64)
    cdef double[:, ::1] c = out
    for i in range(n):
        for k in range(m):
            aik = a[i, k]
            for j in range(p):
                c[i, j] += aik * b[k, j]
    return out


def softmax_rows(double[:, :] m):
    cdef Py_ssize_t n = m.shape[0], d = m.shape[1]
    cdef Py_ssize_t i, j
    cdef double mx, s
    out = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        mx = m[i, 0]
        for j in range(1, d):
            if m[i, j] > mx:
                mx = m[i, j]
        s = 0.0
        for j in range(d):
            o[i, j] = exp(m[i, j] - mx)
            s += o[i, j]
        for j in range(d):
            o[i, j] /= s
    return out


def layer_norm_rows(double[:, :] m, double[:] gamma, double[:] beta, double eps):
    cdef Py_ssize_t n = m.shape[0], d = m.shape[1]
    cdef Py_ssize_t i, j
    cdef double mean, var, dev, inv
    out = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        mean = 0.0
        for j in range(d):
            mean += m[i, j]
        mean /= d
        var = 0.0
        for j in range(d):
            dev = m[i, j] - mean
            var += dev * dev
        var /= d
        inv = 1.0 / sqrt(var + eps)
        for j in range(d):
            o[i, j] = (m[i, j] - mean) * inv * gamma[j] + beta[j]
    return out


def gelu_flat(double[:] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i
    cdef double inv_sqrt2 = 1.0 / sqrt(2.0)
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = 0.5 * x[i] * (1.0 + erf(x[i] * inv_sqrt2))
    return out
