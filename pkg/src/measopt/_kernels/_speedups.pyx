# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled versions of the hot kernels (CSR matrix-vector product).

Mirror of ``_fallback.py``; the row loop accumulates each row left to right,
matching the fallback's bincount accumulation order.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def csr_matvec(cnp.int64_t[::1] row_offsets, cnp.int64_t[::1] col_indices,
               double[::1] values, double[::1] x, double[::1] out,
               row_index=None):
    cdef Py_ssize_t n_rows = row_offsets.shape[0] - 1
    cdef Py_ssize_t i, p
    cdef double acc
    for i in range(n_rows):
        acc = 0.0
        for p in range(row_offsets[i], row_offsets[i + 1]):
            acc += values[p] * x[col_indices[p]]
        out[i] = acc
    return np.asarray(out)
