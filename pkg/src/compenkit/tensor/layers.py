"""Convolution layers, pixel attention and weight initializers."""

from typing import Optional

import numpy as np

from compenkit.tensor import functional as F
from compenkit.tensor.module import Module
from compenkit.tensor.tensor import DEFAULT_DTYPE, Tensor


def he_normal(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """Kaiming normal initialization for ReLU networks."""
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(DEFAULT_DTYPE)


def normal(shape: tuple[int, ...], std: float, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(0.0, std, size=shape).astype(DEFAULT_DTYPE)


class Conv2d(Module):
    """Square-kernel convolution with bias."""

    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        kernel: int = 3,
        stride: int = 1,
        padding: Optional[int] = None,
        rng: Optional[np.random.Generator] = None,
        std: Optional[float] = None,
    ):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        shape = (out_ch, in_ch, kernel, kernel)
        fan_in = in_ch * kernel * kernel
        data = he_normal(shape, fan_in, rng) if std is None else normal(shape, std, rng)
        self.weight = Tensor(data, requires_grad=True)
        self.bias = Tensor(np.zeros(out_ch, dtype=DEFAULT_DTYPE), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2d(Module):
    """Transposed convolution; ``weight`` is (in_ch, out_ch, k, k)."""

    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        kernel: int = 4,
        stride: int = 2,
        padding: int = 1,
        rng: Optional[np.random.Generator] = None,
        std: Optional[float] = None,
    ):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride = stride
        self.padding = padding
        shape = (in_ch, out_ch, kernel, kernel)
        # each output pixel of a stride-s transposed conv sees in_ch * (k/s)^2 inputs
        fan_in = max(in_ch * (kernel // stride) ** 2, 1)
        data = he_normal(shape, fan_in, rng) if std is None else normal(shape, std, rng)
        self.weight = Tensor(data, requires_grad=True)
        self.bias = Tensor(np.zeros(out_ch, dtype=DEFAULT_DTYPE), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return F.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding)


class PixelAttention(Module):
    """
    Per-element sigmoid gate: ``M' = sigmoid(conv1x1(M)) * M``.

    The 1x1 convolution maps ``channels`` to ``channels`` so the gate has the
    same shape as its input.
    """

    def __init__(
        self,
        channels: int,
        rng: Optional[np.random.Generator] = None,
        std: Optional[float] = None,
    ):
        super().__init__()
        self.channels = channels
        self.conv = Conv2d(channels, channels, kernel=1, padding=0, rng=rng, std=std)

    def forward(self, m: Tensor) -> Tensor:
        return F.sigmoid(self.conv(m)) * m
