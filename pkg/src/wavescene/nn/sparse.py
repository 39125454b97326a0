"""Explicit sparse-matrix form of 2-D convolution.

A strided, padded convolution of a single-channel image is a linear map,
so it can be written as a sparse matrix C with one row per output pixel
and one column per input pixel; the row for output position (oy, ox)
holds the kernel taps that touch the input.  Multiplying by C performs
the convolution, multiplying by C^T performs the matching transposed
convolution.  The dense layers use a faster gather/scatter path; this
form exists as the ground-truth formulation they are verified against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse


@dataclass(frozen=True)
class SparseConvMatrix:
    """CSR matrix of one single-channel convolution geometry."""

    matrix: sparse.csr_matrix
    kernel_shape: tuple[int, int]
    input_dims: tuple[int, int]
    output_dims: tuple[int, int]
    stride: int
    padding: int

    def apply(self, x: np.ndarray) -> np.ndarray:
        """C @ flatten(x), reshaped to the output grid."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.input_dims:
            raise ValueError(f"expected input {self.input_dims}, got {x.shape}")
        return (self.matrix @ x.ravel()).reshape(self.output_dims)

    def apply_adjoint(self, y: np.ndarray) -> np.ndarray:
        """C^T @ flatten(y), reshaped to the input grid."""
        y = np.asarray(y, dtype=np.float64)
        if y.shape != self.output_dims:
            raise ValueError(f"expected output-shaped input {self.output_dims}, got {y.shape}")
        return (self.matrix.T @ y.ravel()).reshape(self.input_dims)


def conv_output_dims(
    input_dims: tuple[int, int], kernel_shape: tuple[int, int], stride: int, padding: int
) -> tuple[int, int]:
    """Spatial size of a convolution output: (in + 2P - k) // S + 1."""
    h, w = input_dims
    p, q = kernel_shape
    oh = (h + 2 * padding - p) // stride + 1
    ow = (w + 2 * padding - q) // stride + 1
    return oh, ow


def build_sparse_conv_matrix(
    kernel, input_dims: tuple[int, int], stride: int = 1, padding: int = 0
) -> SparseConvMatrix:
    """Construct C so that C @ flatten(x) == flatten(conv(x, kernel)).

    ``kernel`` is a p x q array, ``input_dims`` the (height, width) of the
    single-channel input.  Kernel taps that fall into the zero padding are
    simply absent from the row, so each row carries at most p*q nonzeros.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2:
        raise ValueError("kernel must be two-dimensional")
    if stride < 1 or padding < 0:
        raise ValueError("stride must be >= 1 and padding >= 0")
    h, w = input_dims
    p, q = kernel.shape
    oh, ow = conv_output_dims(input_dims, kernel.shape, stride, padding)
    if oh < 1 or ow < 1:
        raise ValueError(
            f"kernel {p}x{q} with stride {stride}, padding {padding} does not fit "
            f"a {h}x{w} input"
        )
    rows = []
    cols = []
    vals = []
    for oy in range(oh):
        for ox in range(ow):
            row = oy * ow + ox
            for i in range(p):
                iy = oy * stride + i - padding
                if not 0 <= iy < h:
                    continue
                for j in range(q):
                    ix = ox * stride + j - padding
                    if not 0 <= ix < w:
                        continue
                    rows.append(row)
                    cols.append(iy * w + ix)
                    vals.append(kernel[i, j])
    matrix = sparse.csr_matrix(
        (vals, (rows, cols)), shape=(oh * ow, h * w), dtype=np.float64
    )
    return SparseConvMatrix(
        matrix=matrix,
        kernel_shape=(p, q),
        input_dims=(h, w),
        output_dims=(oh, ow),
        stride=stride,
        padding=padding,
    )
