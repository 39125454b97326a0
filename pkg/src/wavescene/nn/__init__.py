"""Minimal differentiable-operator engine on numpy arrays."""

from .checkpoint import load_checkpoint, save_checkpoint
from .functional import col2im, conv_out_size, im2col, tconv_out_size
from .gradcheck import gradient_check, numeric_gradient
from .init import fan_in_out, xavier_uniform
from .layers import (
    BatchNorm2d,
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool2d,
    Parameter,
    ReLU,
    Sequential,
    TransposedConv2d,
)
from .losses import approximation_loss, cross_entropy_loss
from .optim import Adam, AdamState, adam_step
from .sparse import SparseConvMatrix, build_sparse_conv_matrix, conv_output_dims

__all__ = [
    "Adam",
    "AdamState",
    "BatchNorm2d",
    "Conv2d",
    "Dense",
    "Dropout",
    "Flatten",
    "Layer",
    "MaxPool2d",
    "Parameter",
    "ReLU",
    "Sequential",
    "SparseConvMatrix",
    "TransposedConv2d",
    "adam_step",
    "approximation_loss",
    "build_sparse_conv_matrix",
    "col2im",
    "conv_out_size",
    "conv_output_dims",
    "cross_entropy_loss",
    "fan_in_out",
    "gradient_check",
    "im2col",
    "load_checkpoint",
    "numeric_gradient",
    "save_checkpoint",
    "tconv_out_size",
    "xavier_uniform",
]
