# cython: language_level=3
"""Compiled kernels; same signatures and semantics as ``_pykernels``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


def hankel(x, Py_ssize_t L):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t N = xv.shape[0], q = xv.shape[1]
    cdef Py_ssize_t cols = N - L + 1
    out = np.empty((q * L, cols))
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, a
    for i in range(L):
        for a in range(q):
            for j in range(cols):
                ov[i * q + a, j] = xv[i + j, a]
    return out


def block_convolve(g, X, Py_ssize_t L):
    cdef const double[:, :, ::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    cdef const double[:, ::1] xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t K = gv.shape[0], nr = gv.shape[1], q = gv.shape[2]
    cdef Py_ssize_t c = xv.shape[1]
    out = np.zeros((nr * L, c))
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t t, d, i, j, col, dmax
    cdef double gij
    for t in range(L):
        dmax = K if K < t + 1 else t + 1
        for d in range(dmax):
            for i in range(nr):
                for j in range(q):
                    gij = gv[d, i, j]
                    if gij == 0.0:
                        continue
                    for col in range(c):
                        ov[t * nr + i, col] += gij * xv[(t - d) * q + j, col]
    return out


def ss_simulate(A, B, C, D, u, x0):
    cdef const double[:, ::1] Av = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[:, ::1] Bv = np.ascontiguousarray(B, dtype=np.float64)
    cdef const double[:, ::1] Cv = np.ascontiguousarray(C, dtype=np.float64)
    cdef const double[:, ::1] Dv = np.ascontiguousarray(D, dtype=np.float64)
    cdef const double[:, ::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t N = uv.shape[0], m = uv.shape[1]
    cdef Py_ssize_t n = Av.shape[0], p = Dv.shape[0]
    y = np.zeros((N, p))
    cdef double[:, ::1] yv = y
    cdef double[::1] x = np.array(x0, dtype=np.float64).reshape(n)
    cdef double[::1] xn = np.zeros(n)
    cdef Py_ssize_t k, i, j
    cdef double acc
    for k in range(N):
        for i in range(p):
            acc = 0.0
            for j in range(n):
                acc += Cv[i, j] * x[j]
            for j in range(m):
                acc += Dv[i, j] * uv[k, j]
            yv[k, i] = acc
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += Av[i, j] * x[j]
            for j in range(m):
                acc += Bv[i, j] * uv[k, j]
            xn[i] = acc
        for i in range(n):
            x[i] = xn[i]
    return y
