# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def rotate_rows(X, N1, N2, cos_a, sin_a):
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] n1 = np.ascontiguousarray(N1, dtype=np.float64)
    cdef const double[:, ::1] n2 = np.ascontiguousarray(N2, dtype=np.float64)
    cdef const double[::1] c = np.ascontiguousarray(cos_a, dtype=np.float64)
    cdef const double[::1] s = np.ascontiguousarray(sin_a, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], dim = x.shape[1], i, k
    out_arr = np.empty((n, dim), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double a, b, u, v, cm1
    for i in range(n):
        a = 0.0
        b = 0.0
        for k in range(dim):
            a += n1[i, k] * x[i, k]
            b += n2[i, k] * x[i, k]
        cm1 = c[i] - 1.0
        u = a * cm1 - b * s[i]
        v = a * s[i] + b * cm1
        for k in range(dim):
            out[i, k] = x[i, k] + u * n1[i, k] + v * n2[i, k]
    return out_arr


def triplet_batch_all(E, labels, double margin):
    cdef const double[:, ::1] e = np.ascontiguousarray(E, dtype=np.float64)
    cdef const long long[::1] y = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t n = e.shape[0], dim = e.shape[1], i, j, k, a, p, q
    d_arr = np.zeros((n, n), dtype=np.float64)
    coef_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] d = d_arr
    cdef double[:, ::1] coef = coef_arr
    cdef double t, acc, h, loss_sum = 0.0
    cdef long long n_active = 0
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(dim):
                t = e[i, k] - e[j, k]
                acc += t * t
            d[i, j] = acc
    for a in range(n):
        for p in range(n):
            if p == a or y[p] != y[a]:
                continue
            for q in range(n):
                if y[q] == y[a]:
                    continue
                h = d[a, p] - d[a, q] + margin
                if h > 0.0:
                    loss_sum += h
                    n_active += 1
                    coef[a, q] += 2.0
                    coef[a, p] -= 2.0
                    coef[p, p] += 2.0
                    coef[p, a] -= 2.0
                    coef[q, a] += 2.0
                    coef[q, q] -= 2.0
    return loss_sum, coef_arr, int(n_active)
