"""Numpy fallback for the compiled matmul kernels.

`matmul_f32` goes through BLAS sgemm, which reorders the float32
accumulation (blocked/SIMD) but stays well inside the documented error
tolerance. `matmul_i8_i32` routes through float64 gemm: every int8 product
(|p| <= 16129) and every partial sum (|s| <= K * 16129 << 2**53) is exactly
representable, so the result is bit-identical to true int32 accumulation.
"""

import numpy as np


def matmul_f32(a, b):
    """[M,K] x [K,N] -> [M,N], float32 via BLAS."""
    if a.shape[1] != b.shape[0]:
        raise ValueError("inner dimensions disagree")
    return np.matmul(a, b)


def matmul_i8_i32(a, b):
    """[M,K] x [K,N] -> [M,N], exact int32 result via float64 gemm."""
    if a.shape[1] != b.shape[0]:
        raise ValueError("inner dimensions disagree")
    out = np.matmul(a.astype(np.float64), b.astype(np.float64))
    return out.astype(np.int32)
