# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled numeric kernels; see ``_pykernels`` for the reference versions."""
import numpy as np
cimport numpy as cnp
from libcpp.algorithm cimport nth_element
from libcpp.vector cimport vector

cnp.import_array()


cdef double _dot(const double* a, const double* b, Py_ssize_t n) noexcept nogil:
    # four fixed accumulators: pipelined, and the summation order is deterministic
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0
    cdef Py_ssize_t t = 0, m = n - n % 4
    while t < m:
        s0 += a[t] * b[t]
        s1 += a[t + 1] * b[t + 1]
        s2 += a[t + 2] * b[t + 2]
        s3 += a[t + 3] * b[t + 3]
        t += 4
    while t < n:
        s0 += a[t] * b[t]
        t += 1
    return (s0 + s1) + (s2 + s3)


def lagged_products(a, b, Py_ssize_t tau_max):
    cdef const double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t T = av.shape[0]
    out = np.empty(2 * tau_max + 1)
    cdef double[::1] ov = out
    cdef Py_ssize_t tau
    with nogil:
        for tau in range(tau_max + 1):
            ov[tau_max + tau] = _dot(&av[0], &bv[tau], T - tau)
            ov[tau_max - tau] = _dot(&bv[0], &av[tau], T - tau)
    return out


def lagged_products_batch(X, pairs, Py_ssize_t tau_max):
    cdef const double[:, ::1] xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const long long[:, ::1] pv = np.ascontiguousarray(
        np.asarray(pairs, dtype=np.int64).reshape(-1, 2))
    cdef Py_ssize_t n_pairs = pv.shape[0]
    cdef Py_ssize_t T = xv.shape[1]
    out = np.empty((n_pairs, 2 * tau_max + 1))
    if n_pairs == 0:
        return out
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t k, tau, i, j
    with nogil:
        for k in range(n_pairs):
            i = pv[k, 0]
            j = pv[k, 1]
            for tau in range(tau_max + 1):
                ov[k, tau_max + tau] = _dot(&xv[i, 0], &xv[j, tau], T - tau)
                ov[k, tau_max - tau] = _dot(&xv[j, 0], &xv[i, tau], T - tau)
    return out


def autocovariance_sums(x):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t T = xv.shape[0]
    out = np.empty(T)
    cdef double[::1] ov = out
    cdef Py_ssize_t k
    with nogil:
        for k in range(T):
            ov[k] = _dot(&xv[0], &xv[k], T - k)
    return out


cdef double _median_slope(const double* x, Py_ssize_t T, vector[double]& buf) noexcept nogil:
    cdef Py_ssize_t i, j, m = 0, half
    cdef double lo
    for i in range(T - 1):
        for j in range(i + 1, T):
            buf[m] = (x[j] - x[i]) / <double>(j - i)
            m += 1
    half = m // 2
    nth_element(buf.begin(), buf.begin() + half, buf.begin() + m)
    if m % 2 == 1:
        return buf[half]
    lo = buf[0]
    for i in range(1, half):
        if buf[i] > lo:
            lo = buf[i]
    return 0.5 * (lo + buf[half])


def theil_sen_slope(x):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t T = xv.shape[0]
    if T < 2:
        raise ValueError("need at least two points")
    cdef vector[double] buf
    buf.resize(T * (T - 1) // 2)
    cdef double s
    with nogil:
        s = _median_slope(&xv[0], T, buf)
    return s


def theil_sen_slopes(X):
    cdef const double[:, ::1] xv = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], T = xv.shape[1], r
    if T < 2:
        raise ValueError("need at least two points")
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef vector[double] buf
    buf.resize(T * (T - 1) // 2)
    with nogil:
        for r in range(n):
            ov[r] = _median_slope(&xv[r, 0], T, buf)
    return out
