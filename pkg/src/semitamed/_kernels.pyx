# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled batched stepping kernels.

Same signatures and the same floating-point operation order as
``_kernels_py``; the loops run without the GIL.
"""

import numpy as np
from libc.math cimport fabs, fmax, sqrt


cdef inline void _lu_solve_row(const double[:, ::1] lu, const int[::1] piv,
                               double[:, ::1] x, Py_ssize_t b) noexcept nogil:
    cdef Py_ssize_t d = lu.shape[0]
    cdef Py_ssize_t i, j, p
    cdef double tmp, acc
    for i in range(d):
        p = piv[i]
        if p != i:
            tmp = x[b, i]
            x[b, i] = x[b, p]
            x[b, p] = tmp
    for i in range(1, d):
        acc = x[b, i]
        for j in range(i):
            acc = acc - lu[i, j] * x[b, j]
        x[b, i] = acc
    for i in range(d - 1, -1, -1):
        acc = x[b, i]
        for j in range(i + 1, d):
            acc = acc - lu[i, j] * x[b, j]
        x[b, i] = acc / lu[i, i]


cdef inline double _row_norm(const double[:, ::1] F, Py_ssize_t b) noexcept nogil:
    # scaled by the largest entry so huge or tiny rows neither overflow nor underflow
    cdef Py_ssize_t j
    cdef double q, big = fabs(F[b, 0])
    for j in range(1, F.shape[1]):
        big = fmax(big, fabs(F[b, j]))
    if big == 0.0:
        return 0.0
    q = F[b, 0] / big
    cdef double acc = q * q
    for j in range(1, F.shape[1]):
        q = F[b, j] / big
        acc = acc + q * q
    return big * sqrt(acc)


def matvec(const double[:, ::1] M, const double[:, ::1] X):
    cdef Py_ssize_t nb = X.shape[0], rows = M.shape[0], cols = M.shape[1]
    cdef Py_ssize_t b, i, j
    cdef double acc
    out = np.empty((nb, rows))
    cdef double[:, ::1] Y = out
    with nogil:
        for b in range(nb):
            for i in range(rows):
                acc = M[i, 0] * X[b, 0]
                for j in range(1, cols):
                    acc = acc + M[i, j] * X[b, j]
                Y[b, i] = acc
    return out


def gdw(const double[:, :, ::1] G, const double[:, ::1] dW):
    cdef Py_ssize_t nb = G.shape[0], d = G.shape[1], m = G.shape[2]
    cdef Py_ssize_t b, i, k
    cdef double acc
    out = np.empty((nb, d))
    cdef double[:, ::1] Y = out
    with nogil:
        for b in range(nb):
            for i in range(d):
                acc = G[b, i, 0] * dW[b, 0]
                for k in range(1, m):
                    acc = acc + G[b, i, k] * dW[b, k]
                Y[b, i] = acc
    return out


def row_norm(const double[:, ::1] F):
    cdef Py_ssize_t b, nb = F.shape[0]
    out = np.empty(nb)
    cdef double[::1] y = out
    with nogil:
        for b in range(nb):
            y[b] = _row_norm(F, b)
    return out


def lu_solve(const double[:, ::1] lu, const int[::1] piv, rhs):
    out = np.array(rhs, dtype=np.float64, copy=True, order="C")
    cdef double[:, ::1] x = out
    cdef Py_ssize_t b
    with nogil:
        for b in range(x.shape[0]):
            _lu_solve_row(lu, piv, x, b)
    return out


def tame(const double[:, ::1] F, double h):
    cdef Py_ssize_t nb = F.shape[0], d = F.shape[1]
    cdef Py_ssize_t b, i
    cdef double scale
    out = np.empty((nb, d))
    cdef double[:, ::1] Y = out
    with nogil:
        for b in range(nb):
            scale = h / (1.0 + h * _row_norm(F, b))
            for i in range(d):
                Y[b, i] = F[b, i] * scale
    return out


def direct_step(const double[:, ::1] A, const double[:, ::1] lu, const int[::1] piv,
                const double[:, ::1] X, const double[:, ::1] F,
                const double[:, :, ::1] G, const double[:, ::1] dW,
                double h, bint tamed=True):
    cdef Py_ssize_t nb = X.shape[0], d = X.shape[1], m = G.shape[2]
    cdef Py_ssize_t b, i, j, k
    cdef double scale, acc, noise
    out = np.empty((nb, d))
    cdef double[:, ::1] Y = out
    with nogil:
        for b in range(nb):
            if tamed:
                scale = h / (1.0 + h * _row_norm(F, b))
            else:
                scale = h
            for i in range(d):
                acc = A[i, 0] * X[b, 0]
                for j in range(1, d):
                    acc = acc + A[i, j] * X[b, j]
                noise = G[b, i, 0] * dW[b, 0]
                for k in range(1, m):
                    noise = noise + G[b, i, k] * dW[b, k]
                Y[b, i] = (acc + F[b, i] * scale) + noise
            _lu_solve_row(lu, piv, Y, b)
    return out


def dual_step(const double[:, ::1] ihm_lu, const int[::1] ihm_piv,
              const double[:, ::1] arb_lu, const int[::1] arb_piv,
              const double[:, ::1] M2, const double[:, ::1] A_pinv,
              const double[:, ::1] RB, const double[:, ::1] R,
              const double[:, ::1] U, const double[:, ::1] F,
              const double[:, :, ::1] G, const double[:, ::1] dW, double h):
    cdef Py_ssize_t nb = U.shape[0], d = U.shape[1], m = G.shape[2]
    cdef Py_ssize_t b, i, j, k
    cdef double w, acc
    u_out = np.empty((nb, d))
    v_out = np.empty((nb, d))
    cdef double[:, ::1] Un = u_out
    cdef double[:, ::1] Vn = v_out
    cdef double[::1] phi = np.empty(d)
    cdef double[::1] noise = np.empty(d)
    with nogil:
        for b in range(nb):
            w = 1.0 / (1.0 + h * _row_norm(F, b))
            for i in range(d):
                phi[i] = F[b, i] * w
                acc = G[b, i, 0] * dW[b, 0]
                for k in range(1, m):
                    acc = acc + G[b, i, k] * dW[b, k]
                noise[i] = acc
            for i in range(d):
                acc = M2[i, 0] * phi[0]
                for j in range(1, d):
                    acc = acc + M2[i, j] * phi[j]
                Un[b, i] = U[b, i] + acc * h
                acc = A_pinv[i, 0] * noise[0]
                for j in range(1, d):
                    acc = acc + A_pinv[i, j] * noise[j]
                Un[b, i] = Un[b, i] + acc
            _lu_solve_row(ihm_lu, ihm_piv, Un, b)
            for i in range(d):
                acc = RB[i, 0] * Un[b, 0]
                for j in range(1, d):
                    acc = acc + RB[i, j] * Un[b, j]
                w = R[i, 0] * phi[0]
                for j in range(1, d):
                    w = w + R[i, j] * phi[j]
                Vn[b, i] = acc + w
            _lu_solve_row(arb_lu, arb_piv, Vn, b)
            for i in range(d):
                Vn[b, i] = -Vn[b, i]
    return u_out, v_out
