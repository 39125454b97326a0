"""Trainable layers with explicit forward/backward passes.

Every layer follows the same protocol: ``forward(x, train=False,
rng=None)`` returns the output and caches whatever the gradient needs
(only when ``train`` is true), ``backward(dout)`` consumes the cache,
accumulates parameter gradients in place, and returns the input
gradient.  All math runs at double precision.
"""

from __future__ import annotations

import numpy as np

from .functional import col2im, conv_out_size, im2col, tconv_out_size
from .init import xavier_uniform


class Parameter:
    """Named trainable array with a same-shaped gradient accumulator."""

    def __init__(self, data: np.ndarray, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad[...] = 0.0


class Layer:
    """Base layer: stateless by default, no parameters."""

    def params(self) -> list[Parameter]:
        return []

    def forward(self, x, train: bool = False, rng=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


class Conv2d(Layer):
    """2-D convolution, kernel (out_c, in_c, k, k), via column gather."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 stride: int = 1, padding: int = 0, rng=None, name: str = "conv"):
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self.weight = Parameter(
            xavier_uniform((out_channels, in_channels, kernel, kernel), rng),
            name=f"{name}.weight",
        )
        self.bias = Parameter(np.zeros(out_channels), name=f"{name}.bias")
        self._cache = None

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x, train: bool = False, rng=None):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"expected (B, {self.in_channels}, H, W) input, got {x.shape}"
            )
        b, _, h, w = x.shape
        k, s, p = self.kernel, self.stride, self.padding
        oh, ow = conv_out_size(h, k, s, p), conv_out_size(w, k, s, p)
        if oh < 1 or ow < 1:
            raise ValueError(f"kernel {k} does not fit {h}x{w} input")
        cols = im2col(x, k, k, s, p)
        wmat = self.weight.data.reshape(self.out_channels, -1)
        out = np.einsum("ok,bkn->bon", wmat, cols, optimize=True)
        out = out.reshape(b, self.out_channels, oh, ow) + self.bias.data[None, :, None, None]
        if train:
            self._cache = (x.shape, cols)
        return out

    def backward(self, dout):
        x_shape, cols = self._cache
        b = dout.shape[0]
        dflat = dout.reshape(b, self.out_channels, -1)
        wmat = self.weight.data.reshape(self.out_channels, -1)
        self.weight.grad += np.einsum("bon,bkn->ok", dflat, cols, optimize=True).reshape(
            self.weight.data.shape
        )
        self.bias.grad += dout.sum(axis=(0, 2, 3))
        dcols = np.einsum("ok,bon->bkn", wmat, dflat, optimize=True)
        return col2im(dcols, x_shape, self.kernel, self.kernel, self.stride, self.padding)


class TransposedConv2d(Layer):
    """Adjoint of a strided convolution, kernel (in_c, out_c, k, k).

    Forward scatters columns (the convolution's backward pass), backward
    gathers them, so the map is C^T for the matching convolution and the
    output size follows S * (in - 1) + k - 2P.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 stride: int = 1, padding: int = 0, rng=None, name: str = "tconv"):
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self.weight = Parameter(
            xavier_uniform((in_channels, out_channels, kernel, kernel), rng),
            name=f"{name}.weight",
        )
        self.bias = Parameter(np.zeros(out_channels), name=f"{name}.bias")
        self._cache = None

    def params(self):
        return [self.weight, self.bias]

    def output_size(self, size: int) -> int:
        return tconv_out_size(size, self.kernel, self.stride, self.padding)

    def forward(self, x, train: bool = False, rng=None):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"expected (B, {self.in_channels}, H, W) input, got {x.shape}"
            )
        b, _, h, w = x.shape
        oh, ow = self.output_size(h), self.output_size(w)
        if oh < 1 or ow < 1:
            raise ValueError(f"non-positive output size {oh}x{ow}")
        wmat = self.weight.data.reshape(self.in_channels, -1)
        cols = np.einsum("ik,bin->bkn", wmat, x.reshape(b, self.in_channels, -1),
                         optimize=True)
        out = col2im(cols, (b, self.out_channels, oh, ow), self.kernel, self.kernel,
                     self.stride, self.padding)
        out += self.bias.data[None, :, None, None]
        if train:
            self._cache = (x, (oh, ow))
        return out

    def backward(self, dout):
        x, _ = self._cache
        b = x.shape[0]
        k, s, p = self.kernel, self.stride, self.padding
        dcols = im2col(dout, k, k, s, p)
        xflat = x.reshape(b, self.in_channels, -1)
        self.weight.grad += np.einsum("bin,bkn->ik", xflat, dcols, optimize=True).reshape(
            self.weight.data.shape
        )
        self.bias.grad += dout.sum(axis=(0, 2, 3))
        wmat = self.weight.data.reshape(self.in_channels, -1)
        dx = np.einsum("ik,bkn->bin", wmat, dcols, optimize=True)
        return dx.reshape(x.shape)


class Dense(Layer):
    """Fully connected layer on (B, in_features) inputs."""

    def __init__(self, in_features: int, out_features: int, rng=None, name: str = "fc"):
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(
            xavier_uniform((out_features, in_features), rng), name=f"{name}.weight"
        )
        self.bias = Parameter(np.zeros(out_features), name=f"{name}.bias")
        self._cache = None

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x, train: bool = False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(f"expected (B, {self.in_features}) input, got {x.shape}")
        if train:
            self._cache = x
        return x @ self.weight.data.T + self.bias.data

    def backward(self, dout):
        x = self._cache
        self.weight.grad += dout.T @ x
        self.bias.grad += dout.sum(axis=0)
        return dout @ self.weight.data


class ReLU(Layer):
    def forward(self, x, train: bool = False, rng=None):
        out = np.maximum(x, 0.0)
        if train:
            self._mask = x > 0.0
        return out

    def backward(self, dout):
        return dout * self._mask


class MaxPool2d(Layer):
    """Max pooling; windows that do not fit are dropped (floor sizes)."""

    def __init__(self, window: int = 2, stride: int = 2):
        self.window = window
        self.stride = stride
        self._cache = None

    def forward(self, x, train: bool = False, rng=None):
        k, s = self.window, self.stride
        b, c, h, w = x.shape
        oh, ow = (h - k) // s + 1, (w - k) // s + 1
        if oh < 1 or ow < 1:
            raise ValueError(f"pool window {k} does not fit {h}x{w} input")
        windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
        windows = windows[:, :, ::s, ::s].reshape(b, c, oh, ow, k * k)
        idx = windows.argmax(axis=-1)
        out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
        if train:
            self._cache = (x.shape, idx)
        return out

    def backward(self, dout):
        (b, c, h, w), idx = self._cache
        k, s = self.window, self.stride
        oh, ow = dout.shape[2], dout.shape[3]
        dx = np.zeros((b, c, h, w), dtype=dout.dtype)
        grid = np.indices((b, c, oh, ow))
        hy = grid[2] * s + idx // k
        hx = grid[3] * s + idx % k
        np.add.at(dx, (grid[0], grid[1], hy, hx), dout)
        return dx


class BatchNorm2d(Layer):
    """Per-channel batch normalization over batch and spatial axes."""

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.9,
                 name: str = "bn"):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(np.ones(channels), name=f"{name}.gamma")
        self.beta = Parameter(np.zeros(channels), name=f"{name}.beta")
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self._cache = None

    def params(self):
        return [self.gamma, self.beta]

    def forward(self, x, train: bool = False, rng=None):
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ValueError(f"expected (B, {self.channels}, H, W) input, got {x.shape}")
        axes = (0, 2, 3)
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        out = self.gamma.data[None, :, None, None] * xhat + self.beta.data[None, :, None, None]
        if train:
            self._cache = (xhat, inv_std)
        return out

    def backward(self, dout):
        xhat, inv_std = self._cache
        axes = (0, 2, 3)
        n = dout.shape[0] * dout.shape[2] * dout.shape[3]
        self.gamma.grad += (dout * xhat).sum(axis=axes)
        self.beta.grad += dout.sum(axis=axes)
        g = self.gamma.data[None, :, None, None]
        sum_dout = dout.sum(axis=axes, keepdims=True)
        sum_dout_xhat = (dout * xhat).sum(axis=axes, keepdims=True)
        dx = (g * inv_std[None, :, None, None] / n) * (
            n * dout - sum_dout - xhat * sum_dout_xhat
        )
        return dx


class Dropout(Layer):
    """Inverted dropout: active only in train mode, identity in eval."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._mask = None

    def forward(self, x, train: bool = False, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("dropout in train mode needs an rng")
        keep = 1.0 - self.rate
        self._mask = (rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, dout):
        if self._mask is None:
            return dout
        return dout * self._mask


class Flatten(Layer):
    def forward(self, x, train: bool = False, rng=None):
        if train:
            self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Sequential(Layer):
    """Chain of layers sharing the forward/backward protocol."""

    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def forward(self, x, train: bool = False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout
