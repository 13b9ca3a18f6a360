"""Warp geometry: sampling grids, thin plate splines and the grid refinement network."""

from compenkit.geometry.ganet import GANet
from compenkit.geometry.grids import (
    AffineParams,
    affine_grid,
    check_grid,
    compose_coarse_grid,
    identity_grid,
    warp_image,
)
from compenkit.geometry.refine import RefineNet, refine_grid
from compenkit.geometry.tps import (
    TpsCoefficients,
    TpsParams,
    default_control_points,
    tps_fit,
    tps_grid,
    tps_system,
)

__all__ = [
    "AffineParams",
    "GANet",
    "RefineNet",
    "TpsCoefficients",
    "TpsParams",
    "affine_grid",
    "check_grid",
    "compose_coarse_grid",
    "default_control_points",
    "identity_grid",
    "refine_grid",
    "tps_fit",
    "tps_grid",
    "tps_system",
    "warp_image",
]
