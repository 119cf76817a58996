"""Minimal dense tensor algebra with explicit dtype semantics.

Storage dtypes are F32, F16, and I8; every reduction (matmul accumulation,
layernorm statistics, softmax sums) runs in float32 regardless of storage
dtype. F16 is a storage/rounding semantics only: conversions use IEEE 754
binary16 round-to-nearest-even (overflow to +-inf), and F16 values are
widened exactly to float32 before any arithmetic. Tensors are immutable
after construction (the underlying buffer is marked read-only), so they are
safe to share between threads and observers cannot perturb a forward pass.
"""

from __future__ import annotations

import enum
import math

import numpy as np
from scipy.special import erf

from . import kernels
from .errors import DimensionError, PrecisionStateError, UnsupportedCastError


class Dtype(enum.Enum):
    F32 = "f32"
    F16 = "f16"
    I8 = "i8"

    @property
    def bytes_per_element(self) -> int:
        return _DTYPE_BYTES[self]

    @property
    def numpy_dtype(self):
        return _DTYPE_NUMPY[self]


_DTYPE_BYTES = {Dtype.F32: 4, Dtype.F16: 2, Dtype.I8: 1}
_DTYPE_NUMPY = {Dtype.F32: np.float32, Dtype.F16: np.float16, Dtype.I8: np.int8}
_NUMPY_DTYPE = {np.dtype(np.float32): Dtype.F32,
                np.dtype(np.float16): Dtype.F16,
                np.dtype(np.int8): Dtype.I8}


class Tensor:
    """Immutable row-major dense array with one of the three storage dtypes.

    No strides or views: pruning and quantization rebuild weight tensors, so
    contiguous buffers keep the memory accounting exact
    (byte_size == product(shape) * bytes_per_element, always).
    """

    __slots__ = ("data", "dtype")

    def __init__(self, data: np.ndarray, dtype: Dtype | None = None):
        arr = np.ascontiguousarray(data)
        if arr.dtype not in _NUMPY_DTYPE:
            raise UnsupportedCastError(f"unsupported element type {arr.dtype}")
        inferred = _NUMPY_DTYPE[arr.dtype]
        if dtype is not None and dtype is not inferred:
            raise PrecisionStateError(f"buffer is {inferred}, declared {dtype}")
        if arr.flags.writeable and arr.base is None:
            arr.flags.writeable = False
        elif arr.flags.writeable:
            arr = arr.copy()
            arr.flags.writeable = False
        self.data = arr
        self.dtype = inferred

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def byte_size(self) -> int:
        return self.data.size * self.dtype.bytes_per_element

    def to_f32(self) -> np.ndarray:
        """Widen storage to float32 (exact for F16 and I8)."""
        return self.data.astype(np.float32) if self.dtype is not Dtype.F32 else self.data

    def tobytes(self) -> bytes:
        return self.data.tobytes()

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.dtype.name})"


def tensor(values, dtype: Dtype = Dtype.F32) -> Tensor:
    """Build a Tensor from nested lists / arrays, casting to the given dtype."""
    return Tensor(np.asarray(values, dtype=dtype.numpy_dtype))


# ---------------------------------------------------------------------------
# array-level primitives (shared by the public ops and the model forward)
# ---------------------------------------------------------------------------

def matmul_f32_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} x {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions disagree: {a.shape} x {b.shape}")
    return kernels.matmul_f32(a, b)


def layernorm_array(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                    eps: float = 1e-6) -> np.ndarray:
    h = x.shape[-1] if x.ndim else 0
    if h == 0:
        raise DimensionError("layernorm over an empty last dimension")
    if gamma.shape != (h,) or beta.shape != (h,):
        raise DimensionError(f"gamma/beta must have shape ({h},)")
    x = np.asarray(x, dtype=np.float32)
    mean = x.mean(axis=-1, keepdims=True, dtype=np.float32)
    centered = x - mean
    var = np.mean(centered * centered, axis=-1, keepdims=True, dtype=np.float32)
    inv = 1.0 / np.sqrt(var + np.float32(eps))
    return centered * inv * gamma.astype(np.float32) + beta.astype(np.float32)


def gelu_array(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    # exact erf formulation: 0.5 * x * (1 + erf(x / sqrt(2)))
    return np.float32(0.5) * x * (np.float32(1.0) + erf(x * np.float32(1.0 / math.sqrt(2.0))))


def softmax_array(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax axis {axis} out of range for shape {x.shape}")
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True, dtype=np.float32)


def f16_round(x: np.ndarray) -> np.ndarray:
    """Round float32 values to binary16 (RNE, overflow to +-inf)."""
    with np.errstate(over="ignore"):
        return x.astype(np.float16)


# ---------------------------------------------------------------------------
# public tensor ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """[M,K] x [K,N] -> [M,N] in F32, accumulated in F32.

    F16 operands are widened exactly before the product; I8 operands must go
    through the quantizer's integer path instead.
    """
    for t in (a, b):
        if t.dtype is Dtype.I8:
            raise PrecisionStateError("I8 operands require the quantized matmul path")
    return Tensor(matmul_f32_array(a.to_f32(), b.to_f32()))


def layernorm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine.

    Statistics and output are float32 regardless of input storage dtype.
    """
    return Tensor(layernorm_array(x.to_f32(), gamma.to_f32(), beta.to_f32(), eps))


def gelu(x: Tensor) -> Tensor:
    return Tensor(gelu_array(x.to_f32()))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Shift-by-max stabilized softmax along ``axis``, computed in F32."""
    return Tensor(softmax_array(x.to_f32(), axis))


def cast(x: Tensor, to: Dtype) -> Tensor:
    """Convert between float storage dtypes.

    F32 -> F16 rounds to nearest-even per IEEE 754 binary16 and saturates to
    +-inf beyond the F16 range; F16 -> F32 is exact. I8 is produced only by
    the quantizer, never by cast.
    """
    if to is Dtype.I8 or x.dtype is Dtype.I8:
        raise UnsupportedCastError("I8 conversions are owned by the quantizer")
    if to is x.dtype:
        return x
    if to is Dtype.F16:
        return Tensor(f16_round(x.data))
    return Tensor(x.data.astype(np.float32))
