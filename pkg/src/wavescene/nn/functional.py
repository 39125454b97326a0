"""Gather/scatter primitives shared by the convolution layers.

``im2col`` gathers sliding windows into a column matrix so convolution
becomes one matrix product; ``col2im`` is its exact adjoint, scattering
columns back with overlap-add.  Convolution uses gather forward and
scatter backward; transposed convolution swaps the two, which is what
makes it the exact adjoint map.
"""

from __future__ import annotations

import numpy as np


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    """(B, C, H, W) -> (B, C*kh*kw, OH*OW) window gather."""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    b, c = x.shape[:2]
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]
    oh, ow = windows.shape[2], windows.shape[3]
    cols = windows.transpose(0, 1, 4, 5, 2, 3).reshape(b, c * kh * kw, oh * ow)
    return np.ascontiguousarray(cols)


def col2im(
    cols: np.ndarray,
    out_shape: tuple[int, int, int, int],
    kh: int,
    kw: int,
    stride: int,
    padding: int,
) -> np.ndarray:
    """Adjoint of :func:`im2col`: overlap-add columns into (B, C, H, W)."""
    b, c, h, w = out_shape
    hp, wp = h + 2 * padding, w + 2 * padding
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    blocks = cols.reshape(b, c, kh, kw, oh, ow)
    padded = np.zeros((b, c, hp, wp), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            padded[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += blocks[
                :, :, i, j
            ]
    if padding:
        return padded[:, :, padding:-padding, padding:-padding].copy()
    return padded


def conv_out_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def tconv_out_size(size: int, k: int, stride: int, padding: int) -> int:
    """Transposed-convolution size law: S * (in - 1) + k - 2P."""
    return stride * (size - 1) + k - 2 * padding
