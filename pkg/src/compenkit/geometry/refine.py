"""
Grid refinement network.

Six 3x3 convolutions with ReLU (the first and third with stride 2) followed
by two stride-2 transposed convolutions predict a residual that is added to
the coarse grid. Pixel-attention gates sit after the second and fourth
convolutions.
"""

from typing import Optional

import numpy as np

from compenkit.core.exceptions import InvalidShapeError
from compenkit.core.schemas import InitMode
from compenkit.geometry.grids import check_grid
from compenkit.tensor import Conv2d, ConvTranspose2d, Module, PixelAttention, Tensor, relu

FINAL_LAYER_STD = 0.01


class RefineNet(Module):
    """Residual refinement of a sampling grid."""

    def __init__(
        self,
        widths: tuple[int, int, int, int, int, int] = (32, 32, 64, 64, 64, 64),
        use_attention: bool = True,
        init_mode: InitMode = "scaled",
        rng: Optional[np.random.Generator] = None,
    ):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        std = 1.0 if init_mode == "normal" else None
        w1, w2, w3, w4, w5, w6 = widths
        self.use_attention = use_attention
        self.c1 = Conv2d(2, w1, stride=2, rng=rng, std=std)
        self.c2 = Conv2d(w1, w2, rng=rng, std=std)
        if use_attention:
            self.r1 = PixelAttention(w2, rng=rng, std=std)
        self.c3 = Conv2d(w2, w3, stride=2, rng=rng, std=std)
        self.c4 = Conv2d(w3, w4, rng=rng, std=std)
        if use_attention:
            self.r2 = PixelAttention(w4, rng=rng, std=std)
        self.c5 = Conv2d(w4, w5, rng=rng, std=std)
        self.c6 = Conv2d(w5, w6, rng=rng, std=std)
        self.t1 = ConvTranspose2d(w6, w1, rng=rng, std=std)
        self.t2 = ConvTranspose2d(w1, 2, rng=rng, std=std if std is not None else FINAL_LAYER_STD)

    def forward(self, g_coarse: Tensor) -> Tensor:
        return refine_grid(self, g_coarse)


def refine_grid(net: RefineNet, g_coarse: Tensor) -> Tensor:
    """
    Add the network's residual to the coarse grid.

    Args:
        net: Refinement weights
        g_coarse: (H, W, 2) grid with H and W divisible by 4

    Returns:
        Refined (H, W, 2) grid

    Raises:
        InvalidShapeError: If H or W is not a multiple of 4
    """
    check_grid(g_coarse)
    h, w, _ = g_coarse.shape
    if h % 4 or w % 4:
        raise InvalidShapeError("refinement needs grid sides divisible by 4", shape=g_coarse.shape)

    x = g_coarse.permute(2, 0, 1).reshape(1, 2, h, w)
    x = relu(net.c1(x))
    x = relu(net.c2(x))
    if net.use_attention:
        x = net.r1(x)
    x = relu(net.c3(x))
    x = relu(net.c4(x))
    if net.use_attention:
        x = net.r2(x)
    x = relu(net.c5(x))
    x = relu(net.c6(x))
    x = relu(net.t1(x))
    delta = net.t2(x)
    return g_coarse + delta.reshape(2, h, w).permute(1, 2, 0)
