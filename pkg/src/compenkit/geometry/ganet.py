"""Coarse-to-fine geometric correction: affine, then TPS, then residual refinement."""

from typing import Optional

import numpy as np

from compenkit.core.schemas import InitMode
from compenkit.geometry.grids import AffineParams, compose_coarse_grid, warp_image
from compenkit.geometry.refine import RefineNet
from compenkit.geometry.tps import TpsParams, default_control_points
from compenkit.tensor import Module, Tensor


class GANet(Module):
    """
    Learns the sampling grid that maps captured images into the projector frame.

    With identity ``theta``, zero TPS offsets and zero refinement weights the
    produced grid is the identity mesh.
    """

    def __init__(
        self,
        control_points: int = 5,
        refine_widths: tuple[int, int, int, int, int, int] = (32, 32, 64, 64, 64, 64),
        use_refine: bool = True,
        use_refine_attention: bool = True,
        init_mode: InitMode = "scaled",
        rng: Optional[np.random.Generator] = None,
    ):
        super().__init__()
        self.use_refine = use_refine
        self.affine = AffineParams()
        self.tps = TpsParams(default_control_points(control_points))
        if use_refine:
            self.refine = RefineNet(refine_widths, use_refine_attention, init_mode, rng)

    def coarse_grid(self, height: int, width: int) -> Tensor:
        return compose_coarse_grid(self.affine(height, width), self.tps(height, width))

    def grid(self, height: int, width: int) -> Tensor:
        """Final (height, width, 2) sampling grid."""
        g = self.coarse_grid(height, width)
        if self.use_refine:
            g = self.refine(g)
        return g

    def forward(self, image: Tensor, grid: Optional[Tensor] = None) -> Tensor:
        if grid is None:
            grid = self.grid(image.shape[2], image.shape[3])
        return warp_image(image, grid)
