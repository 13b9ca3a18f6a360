"""Tensor core: arrays with reverse-mode differentiation and the ops the networks need."""

from compenkit.tensor.functional import (
    activation,
    clamp01,
    conv2d,
    conv_transpose2d,
    elementwise,
    expand_batch,
    grid_sample_bilinear,
    pixel_shuffle,
    pixel_unshuffle,
    relu,
    sigmoid,
)
from compenkit.tensor.gradcheck import gradcheck
from compenkit.tensor.layers import Conv2d, ConvTranspose2d, PixelAttention
from compenkit.tensor.module import Module
from compenkit.tensor.optim import Adam, step_decay_lr
from compenkit.tensor.tensor import Param, Tensor, as_array, as_tensor, is_grad_enabled, no_grad

__all__ = [
    "Adam",
    "Conv2d",
    "ConvTranspose2d",
    "Module",
    "Param",
    "PixelAttention",
    "Tensor",
    "activation",
    "as_array",
    "as_tensor",
    "clamp01",
    "conv2d",
    "conv_transpose2d",
    "elementwise",
    "expand_batch",
    "gradcheck",
    "grid_sample_bilinear",
    "is_grad_enabled",
    "no_grad",
    "pixel_shuffle",
    "pixel_unshuffle",
    "relu",
    "sigmoid",
    "step_decay_lr",
]
