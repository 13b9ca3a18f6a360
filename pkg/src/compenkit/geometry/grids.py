"""
Sampling grids and the warps built from them.

A sampling grid is an (H, W, 2) tensor of normalized (x, y) source
coordinates, one per output pixel; (-1, -1) is the center of the top-left
source pixel and (1, 1) the center of the bottom-right one.
"""

from typing import Optional

import numpy as np

from compenkit.core.exceptions import InvalidArgumentError, InvalidShapeError
from compenkit.tensor import Module, Tensor, as_tensor, grid_sample_bilinear


def identity_grid(height: int, width: int, dtype: np.dtype = np.float32) -> np.ndarray:
    """Regular mesh over [-1, 1]^2 of shape (height, width, 2)."""
    if height < 1 or width < 1:
        raise InvalidArgumentError("grid size must be positive", height=height, width=width)
    xs = np.linspace(-1.0, 1.0, width) if width > 1 else np.zeros(1)
    ys = np.linspace(-1.0, 1.0, height) if height > 1 else np.zeros(1)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx, gy], axis=-1).astype(dtype)


def check_grid(grid: Tensor, height: Optional[int] = None, width: Optional[int] = None) -> None:
    """Validate grid rank, last axis and optionally its spatial size."""
    if grid.ndim != 3 or grid.shape[-1] != 2:
        raise InvalidShapeError("sampling grid must have shape (H, W, 2)", shape=grid.shape)
    if height is not None and width is not None and grid.shape[:2] != (height, width):
        raise InvalidShapeError(
            "sampling grid has the wrong size", expected=(height, width), got=grid.shape[:2]
        )


def affine_grid(theta: Tensor, height: int, width: int) -> Tensor:
    """
    Apply a 2x3 affine matrix to every point of the regular mesh.

    Args:
        theta: (2, 3) tensor mapping output coordinates to source coordinates
        height: Grid rows
        width: Grid columns

    Returns:
        (height, width, 2) grid, differentiable with respect to ``theta``
    """
    if theta.shape != (2, 3):
        raise InvalidShapeError("theta must have shape (2, 3)", shape=theta.shape)
    mesh = identity_grid(height, width, theta.dtype).reshape(-1, 2)
    homogeneous = np.concatenate([mesh, np.ones((mesh.shape[0], 1), dtype=theta.dtype)], axis=1)
    return (Tensor(homogeneous) @ theta.T).reshape(height, width, 2)


class AffineParams(Module):
    """Learnable 2x3 affine matrix, initialized to the identity."""

    def __init__(self) -> None:
        super().__init__()
        identity = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], dtype=np.float32)
        self.theta = Tensor(identity, requires_grad=True)

    def forward(self, height: int, width: int) -> Tensor:
        return affine_grid(self.theta, height, width)


def compose_coarse_grid(g_aff: Tensor, g_tps: Tensor) -> Tensor:
    """
    Sample the affine grid, viewed as a 2-channel image, at the TPS grid.

    The result sends each output pixel first through the TPS map and then
    through the affine map. It reduces to ``g_aff`` when ``g_tps`` is the
    identity mesh.
    """
    check_grid(g_aff)
    check_grid(g_tps)
    if g_aff.shape != g_tps.shape:
        raise InvalidShapeError(
            "grids must have the same size", affine=g_aff.shape, tps=g_tps.shape
        )
    h, w, _ = g_aff.shape
    image = g_aff.permute(2, 0, 1).reshape(1, 2, h, w)
    sampled = grid_sample_bilinear(image, g_tps)
    return sampled.reshape(2, h, w).permute(1, 2, 0)


def warp_image(image: Tensor, grid: Tensor) -> Tensor:
    """Resample an (N, C, H, W) image through a sampling grid."""
    grid = as_tensor(grid, dtype=image.dtype)
    check_grid(grid)
    return grid_sample_bilinear(image, grid)
