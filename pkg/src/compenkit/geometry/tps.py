"""
Thin plate spline warps.

The spline maps a point p to

    f(p) = a0 + a1 * x + a2 * y + sum_i w_i * U(|p - c_i|),   U(r) = r^2 log r^2

with control points c_i. Coefficients solve the bordered system
[[K, P], [P^T, 0]] [w; a] = [targets; 0], where K_ij = U(|c_i - c_j|) and
P = [1, x, y]. Because the system matrix depends only on the control points,
its inverse is computed once and the grid stays linear in the offsets.
"""

from dataclasses import dataclass

import numpy as np

from compenkit.core.exceptions import (
    DegenerateConfigurationError,
    InvalidArgumentError,
    InvalidShapeError,
)
from compenkit.geometry.grids import identity_grid
from compenkit.tensor import Module, Tensor, as_array

_COND_LIMIT = 1e12


def default_control_points(count: int = 5) -> np.ndarray:
    """
    Control points in normalized coordinates.

    Five points are the corners of [-1, 1]^2 plus the center. Square counts
    (4, 9, 16, ...) give a regular m x m lattice.
    """
    if count == 5:
        return np.array([[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0], [1.0, 1.0], [0.0, 0.0]])
    side = int(round(np.sqrt(count)))
    if side >= 2 and side * side == count:
        axis = np.linspace(-1.0, 1.0, side)
        gx, gy = np.meshgrid(axis, axis)
        return np.stack([gx.ravel(), gy.ravel()], axis=1)
    raise InvalidArgumentError("control point count must be 5 or a square >= 4", count=count)


def tps_kernel(sq_dist: np.ndarray) -> np.ndarray:
    """U evaluated on squared distances, with U(0) = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        values = sq_dist * np.log(sq_dist)
    return np.where(sq_dist > 0.0, values, 0.0)


def _pairwise_sq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sum(diff * diff, axis=-1)


def tps_system(ctrl_points: np.ndarray) -> np.ndarray:
    """Bordered TPS system matrix of shape (n + 3, n + 3)."""
    ctrl = np.asarray(ctrl_points, dtype=np.float64)
    if ctrl.ndim != 2 or ctrl.shape[1] != 2:
        raise InvalidShapeError("control points must have shape (n, 2)", shape=ctrl.shape)
    n = ctrl.shape[0]
    if n < 3:
        raise DegenerateConfigurationError("TPS needs at least three control points", count=n)
    p = np.concatenate([np.ones((n, 1)), ctrl], axis=1)
    system = np.zeros((n + 3, n + 3))
    system[:n, :n] = tps_kernel(_pairwise_sq(ctrl, ctrl))
    system[:n, n:] = p
    system[n:, :n] = p.T
    return system


def tps_system_inverse(ctrl_points: np.ndarray) -> np.ndarray:
    """
    Invert the TPS system.

    Raises:
        DegenerateConfigurationError: For duplicate or collinear control points
    """
    system = tps_system(ctrl_points)
    if not np.isfinite(np.linalg.cond(system)) or np.linalg.cond(system) > _COND_LIMIT:
        raise DegenerateConfigurationError(
            "TPS system is singular; control points are duplicate or collinear",
            count=system.shape[0] - 3,
        )
    return np.linalg.inv(system)


@dataclass(frozen=True)
class TpsCoefficients:
    """Radial weights (n, 2) and affine part (3, 2) with rows (1, x, y)."""

    weights: np.ndarray
    affine: np.ndarray

    def evaluate(self, points: np.ndarray, ctrl_points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        basis = tps_kernel(_pairwise_sq(pts, np.asarray(ctrl_points, dtype=np.float64)))
        poly = np.concatenate([np.ones((pts.shape[0], 1)), pts], axis=1)
        return basis @ self.weights + poly @ self.affine


def tps_fit(ctrl_points: np.ndarray, offsets: np.ndarray) -> TpsCoefficients:
    """
    Fit the spline that sends every control point to point + offset.

    Raises:
        DegenerateConfigurationError: If the system is singular
        InvalidShapeError: If offsets and control points disagree in shape
    """
    ctrl = np.asarray(ctrl_points, dtype=np.float64)
    off = np.asarray(as_array(offsets), dtype=np.float64)
    if off.shape != ctrl.shape:
        raise InvalidShapeError(
            "offsets must match control points", ctrl=ctrl.shape, offsets=off.shape
        )
    n = ctrl.shape[0]
    rhs = np.zeros((n + 3, 2))
    rhs[:n] = ctrl + off
    solution = tps_system_inverse(ctrl) @ rhs
    return TpsCoefficients(weights=solution[:n], affine=solution[n:])


def tps_basis(ctrl_points: np.ndarray, height: int, width: int) -> np.ndarray:
    """Design matrix (H*W, n + 3) of the regular mesh: [U(|p - c_i|)..., 1, x, y]."""
    mesh = identity_grid(height, width, np.float64).reshape(-1, 2)
    radial = tps_kernel(_pairwise_sq(mesh, np.asarray(ctrl_points, dtype=np.float64)))
    return np.concatenate([radial, np.ones((mesh.shape[0], 1)), mesh], axis=1)


class TpsParams(Module):
    """Control points, their learnable offsets and the precomputed solve matrix."""

    def __init__(self, ctrl_points: np.ndarray):
        super().__init__()
        self.ctrl_points = np.asarray(ctrl_points, dtype=np.float64)
        self.system_matrix_inverse = tps_system_inverse(self.ctrl_points)
        self.offsets = Tensor(np.zeros_like(self.ctrl_points, dtype=np.float32), requires_grad=True)
        self._basis_cache: dict[tuple[int, int], np.ndarray] = {}

    @property
    def num_points(self) -> int:
        return self.ctrl_points.shape[0]

    def coefficients(self) -> Tensor:
        """Stacked [w; a] of shape (n + 3, 2), linear in the offsets."""
        dtype = self.offsets.dtype
        n = self.num_points
        solve = Tensor(self.system_matrix_inverse[:, :n].astype(dtype))
        targets = Tensor(self.ctrl_points.astype(dtype)) + self.offsets
        return solve @ targets

    def basis(self, height: int, width: int) -> np.ndarray:
        key = (height, width)
        if key not in self._basis_cache:
            self._basis_cache[key] = tps_basis(self.ctrl_points, height, width)
        return self._basis_cache[key]

    def forward(self, height: int, width: int) -> Tensor:
        return tps_grid(self, height, width)


def tps_grid(tps: TpsParams, height: int, width: int) -> Tensor:
    """Evaluate the fitted spline at every mesh point as an (H, W, 2) grid."""
    basis = Tensor(tps.basis(height, width).astype(tps.offsets.dtype))
    return (basis @ tps.coefficients()).reshape(height, width, 2)
