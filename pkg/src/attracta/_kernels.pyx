# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the integrator's inner kernels.

Same signatures and semantics as ``attracta._kernels_py``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


cdef inline Py_ssize_t _locate(const double[::1] knots, Py_ssize_t n, double t) noexcept nogil:
    # largest k with knots[k] <= t, clamped to [0, n-1]
    cdef Py_ssize_t lo = 0, hi = n, mid
    if t >= knots[n]:
        return n - 1
    if t <= knots[0]:
        return 0
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if knots[mid] <= t:
            lo = mid
        else:
            hi = mid
    return lo


def dense_eval(const double[::1] knots, const double[:, ::1] ys,
               const double[::1] hs, const double[:, :, ::1] Q,
               Py_ssize_t n, times):
    cdef const double[::1] tv = np.ascontiguousarray(times, dtype=np.float64).ravel()
    cdef Py_ssize_t m = tv.shape[0]
    cdef Py_ssize_t s = ys.shape[1]
    out_arr = np.empty((m, s), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double h, th, p
    with nogil:
        for i in range(m):
            k = _locate(knots, n, tv[i])
            h = hs[k]
            th = (tv[i] - knots[k]) / h
            for j in range(s):
                p = ((Q[k, j, 3] * th + Q[k, j, 2]) * th + Q[k, j, 1]) * th + Q[k, j, 0]
                out[i, j] = ys[k, j] + h * th * p
    return out_arr


def poly_eval(const double[::1] y0, double h, const double[:, ::1] Q, thetas):
    cdef const double[::1] tv = np.ascontiguousarray(thetas, dtype=np.float64).ravel()
    cdef Py_ssize_t m = tv.shape[0]
    cdef Py_ssize_t s = y0.shape[0]
    out_arr = np.empty((m, s), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double th, p
    with nogil:
        for i in range(m):
            th = tv[i]
            for j in range(s):
                p = ((Q[j, 3] * th + Q[j, 2]) * th + Q[j, 1]) * th + Q[j, 0]
                out[i, j] = y0[j] + h * th * p
    return out_arr


def stage_state(const double[::1] y, double h, const double[:, ::1] K,
                const double[::1] a_row, Py_ssize_t nstage):
    cdef Py_ssize_t s = y.shape[0]
    out_arr = np.empty(s, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double acc
    with nogil:
        for i in range(s):
            acc = 0.0
            for j in range(nstage):
                acc += a_row[j] * K[j, i]
            out[i] = y[i] + h * acc
    return out_arr


def error_norm(const double[::1] y, const double[::1] y_new, const double[:, ::1] K,
               const double[::1] E, double h, double rtol, double atol):
    cdef Py_ssize_t s = y.shape[0]
    cdef Py_ssize_t nst = E.shape[0]
    cdef Py_ssize_t i, j
    cdef double acc, sc, e, total = 0.0
    with nogil:
        for i in range(s):
            acc = 0.0
            for j in range(nst):
                acc += E[j] * K[j, i]
            sc = atol + rtol * (fabs(y[i]) if fabs(y[i]) > fabs(y_new[i]) else fabs(y_new[i]))
            e = h * acc / sc
            total += e * e
    return sqrt(total / s)


def panel_nodes(edges, const double[::1] x_ref, const double[::1] w_ref):
    cdef const double[::1] ev = np.ascontiguousarray(edges, dtype=np.float64).ravel()
    cdef Py_ssize_t npan = ev.shape[0] - 1
    cdef Py_ssize_t q = x_ref.shape[0]
    nodes_arr = np.empty(npan * q, dtype=np.float64)
    weights_arr = np.empty(npan * q, dtype=np.float64)
    cdef double[::1] nodes = nodes_arr
    cdef double[::1] weights = weights_arr
    cdef Py_ssize_t p, k
    cdef double a, half
    with nogil:
        for p in range(npan):
            a = ev[p]
            half = 0.5 * (ev[p + 1] - a)
            for k in range(q):
                nodes[p * q + k] = a + half * (x_ref[k] + 1.0)
                weights[p * q + k] = half * w_ref[k]
    return nodes_arr, weights_arr
