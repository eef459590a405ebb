# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled element-local kernels."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def apply_local(const double[:, :, ::1] self_blocks,
                const long long[:, ::1] nbr_idx,
                const double[:, :, :, ::1] nbr_blocks,
                const double[:, ::1] beta,
                const double[:, ::1] extra,
                const double[:, :, ::1] minv):
    """Element-local operator application (see the numpy fallback for the contract)."""
    cdef Py_ssize_t nel = self_blocks.shape[0]
    cdef Py_ssize_t n = self_blocks.shape[1]
    cdef Py_ssize_t m = self_blocks.shape[2]
    cdef Py_ssize_t nf = nbr_idx.shape[1]
    cdef Py_ssize_t k, f, i, j
    cdef long long nb
    cdef double acc, t
    out = np.zeros((nel, n), dtype=np.float64)
    cdef double[:, ::1] res = out
    cdef double[::1] b = np.empty(n, dtype=np.float64)
    with nogil:
        for k in range(nel):
            for i in range(n):
                acc = 0.0
                for j in range(m):
                    if j == 0:
                        acc = self_blocks[k, i, 0] * beta[k, 0]
                    else:
                        acc = acc + self_blocks[k, i, j] * beta[k, j]
                b[i] = acc
            for f in range(nf):
                nb = nbr_idx[k, f]
                if nb < 0:
                    continue
                for i in range(n):
                    t = 0.0
                    for j in range(m):
                        if j == 0:
                            t = nbr_blocks[k, f, i, 0] * beta[nb, 0]
                        else:
                            t = t + nbr_blocks[k, f, i, j] * beta[nb, j]
                    b[i] = b[i] + t
            for i in range(n):
                b[i] = b[i] + extra[k, i]
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    if j == 0:
                        acc = minv[k, i, 0] * b[0]
                    else:
                        acc = acc + minv[k, i, j] * b[j]
                res[k, i] = acc
    return out


def quad_values(const double[:, ::1] coeffs, const double[:, ::1] table):
    """Evaluate modal coefficients (nel, n) at points with basis table (nq, n)."""
    cdef Py_ssize_t nel = coeffs.shape[0]
    cdef Py_ssize_t n = coeffs.shape[1]
    cdef Py_ssize_t nq = table.shape[0]
    cdef Py_ssize_t k, q, j
    cdef double acc
    out = np.empty((nel, nq), dtype=np.float64)
    cdef double[:, ::1] res = out
    with nogil:
        for k in range(nel):
            for q in range(nq):
                acc = 0.0
                for j in range(n):
                    acc = acc + coeffs[k, j] * table[q, j]
                res[k, q] = acc
    return out
