# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled matrix-multiply kernels.

Both kernels accumulate each output element over k in strictly increasing
order, so results are bit-identical to a naive triple loop with the same
accumulator width (float32 for `matmul_f32`, int32 for `matmul_i8_i32`).
The i-k-j loop nesting keeps the inner loop contiguous so the compiler can
vectorize it without reordering the per-element accumulation sequence.

Compiled with -ffp-contract=off; see setup.py.
"""

import numpy as np


def matmul_f32(const float[:, ::1] a, const float[:, ::1] b):
    """[M,K] x [K,N] -> [M,N], float32 storage and accumulation."""
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t k = a.shape[1]
    cdef Py_ssize_t n = b.shape[1]
    if b.shape[0] != k:
        raise ValueError("inner dimensions disagree")
    out = np.zeros((m, n), dtype=np.float32)
    cdef float[:, ::1] c = out
    cdef Py_ssize_t i, p, j
    cdef float aip
    for i in range(m):
        for p in range(k):
            aip = a[i, p]
            for j in range(n):
                c[i, j] += aip * b[p, j]
    return out


def matmul_i8_i32(const signed char[:, ::1] a, const signed char[:, ::1] b):
    """[M,K] x [K,N] -> [M,N], int8 inputs with exact int32 accumulation.

    Caller guarantees K * 127 * 127 < 2**31 so the accumulator cannot
    overflow (holds for any realistic layer width).
    """
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t k = a.shape[1]
    cdef Py_ssize_t n = b.shape[1]
    if b.shape[0] != k:
        raise ValueError("inner dimensions disagree")
    out = np.zeros((m, n), dtype=np.int32)
    cdef int[:, ::1] c = out
    cdef Py_ssize_t i, p, j
    cdef int aip
    for i in range(m):
        for p in range(k):
            aip = a[i, p]
            for j in range(n):
                c[i, j] += aip * b[p, j]
    return out
