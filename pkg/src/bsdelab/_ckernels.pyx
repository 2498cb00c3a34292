# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled path-loop kernels; see ``_pykernels`` for the reference semantics."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef enum:
    MAX_LEVELS = 64


cdef inline void _push(double[:, ::1] stack, int[::1] levels, int* top,
                       const double* row, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t c
    cdef int t = top[0]
    for c in range(k):
        stack[t, c] = row[c]
    levels[t] = 0
    t += 1
    while t >= 2 and levels[t - 1] == levels[t - 2]:
        for c in range(k):
            stack[t - 2, c] = stack[t - 2, c] + stack[t - 1, c]
        levels[t - 2] += 1
        t -= 1
    top[0] = t


cdef inline void _fold(double[:, ::1] stack, int top, double[::1] out,
                       Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t c
    cdef int t
    for c in range(k):
        out[c] = stack[top - 1, c]
    t = top - 2
    while t >= 0:
        for c in range(k):
            out[c] = stack[t, c] + out[c]
        t -= 1


def pairwise_colsum(a):
    cdef const double[:, ::1] A = np.ascontiguousarray(a, dtype=np.float64)
    cdef Py_ssize_t n = A.shape[0], k = A.shape[1], i
    out_arr = np.zeros(k)
    if n == 0 or k == 0:
        return out_arr
    cdef double[::1] out = out_arr
    cdef double[:, ::1] stack = np.empty((MAX_LEVELS, k))
    cdef int[::1] levels = np.zeros(MAX_LEVELS, dtype=np.intc)
    cdef int top = 0
    with nogil:
        for i in range(n):
            _push(stack, levels, &top, &A[i, 0], k)
        _fold(stack, top, out, k)
    return out_arr


def normal_equations(X, Y):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] Yv = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t N = Xv.shape[0], p = Xv.shape[1], r = Yv.shape[1]
    cdef Py_ssize_t k = p * p + p * r, i, a, b
    out_arr = np.zeros(k)
    cdef double[::1] out = out_arr
    cdef double[::1] row = np.empty(k)
    cdef double[:, ::1] stack = np.empty((MAX_LEVELS, k))
    cdef int[::1] levels = np.zeros(MAX_LEVELS, dtype=np.intc)
    cdef int top = 0
    if N > 0:
        with nogil:
            for i in range(N):
                for a in range(p):
                    for b in range(p):
                        row[a * p + b] = Xv[i, a] * Xv[i, b]
                    for b in range(r):
                        row[p * p + a * r + b] = Xv[i, a] * Yv[i, b]
                _push(stack, levels, &top, &row[0], k)
            _fold(stack, top, out, k)
    return out_arr[:p * p].reshape(p, p), out_arr[p * p:].reshape(p, r)


def forward_cumsum(incr):
    arr = np.asarray(incr, dtype=np.float64)
    shape = arr.shape
    cdef const double[:, :, ::1] x = np.ascontiguousarray(arr.reshape(shape[0], shape[1], int(np.prod(shape[2:], dtype=np.int64))))
    cdef Py_ssize_t N = x.shape[0], J = x.shape[1], n = x.shape[2], i, j, c
    out_arr = np.zeros((N, J + 1, n))
    cdef double[:, :, ::1] out = out_arr
    with nogil:
        for i in range(N):
            for j in range(J):
                for c in range(n):
                    out[i, j + 1, c] = out[i, j, c] + x[i, j, c]
    return out_arr.reshape((shape[0], shape[1] + 1) + shape[2:])


def backward_cumsum(incr):
    arr = np.asarray(incr, dtype=np.float64)
    shape = arr.shape
    cdef const double[:, :, ::1] x = np.ascontiguousarray(arr.reshape(shape[0], shape[1], int(np.prod(shape[2:], dtype=np.int64))))
    cdef Py_ssize_t N = x.shape[0], J = x.shape[1], n = x.shape[2], i, j, c
    out_arr = np.zeros((N, J + 1, n))
    cdef double[:, :, ::1] out = out_arr
    with nogil:
        for i in range(N):
            for c in range(n):
                if J > 0:
                    out[i, J - 1, c] = x[i, J - 1, c]
            j = J - 2
            while j >= 0:
                for c in range(n):
                    out[i, j, c] = x[i, j, c] + out[i, j + 1, c]
                j -= 1
    return out_arr.reshape((shape[0], shape[1] + 1) + shape[2:])


def affine_forward(eta, u, v, dt, dw, Py_ssize_t j0):
    cdef const double[:, ::1] e = np.ascontiguousarray(eta, dtype=np.float64)
    cdef const double[:, :, ::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[:, :, ::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef const double[::1] h = np.ascontiguousarray(dt, dtype=np.float64)
    cdef const double[:, ::1] db = np.ascontiguousarray(dw, dtype=np.float64)
    cdef Py_ssize_t N = uu.shape[0], J = uu.shape[1], n = uu.shape[2], i, j, c
    out_arr = np.zeros((N, J + 1, n))
    cdef double[:, :, ::1] z = out_arr
    with nogil:
        for i in range(N):
            for c in range(n):
                z[i, j0, c] = e[i, c]
            for j in range(j0, J):
                for c in range(n):
                    z[i, j + 1, c] = z[i, j, c] + (uu[i, j, c] * h[j] + vv[i, j, c] * db[i, j])
    return out_arr
