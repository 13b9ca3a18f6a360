"""
Synthetic projector-camera forward model.

A projector input x (N, 3, H, W) in [0, 1] is turned into a camera capture in
three stages:

1. photometric response in the projector frame:
   r = reflectance * clamp01(color_mix @ x ** projector_gamma + ambient),
   with reflectance = (1 - blend) + blend * surface_texture;
2. geometry: every camera pixel reads r at a sampling grid built from a
   homography (camera -> projector, normalized coordinates) plus a smooth
   sinusoidal displacement, using border-clamped bilinear sampling;
3. camera: clamp01(r) ** (1 / camera_gamma) plus Gaussian noise, clamped.

Noise for a given image is drawn from a generator seeded by
(scene seed, render index), so a render is a pure function of the scene,
the input and its index.
"""

import hashlib
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from compenkit.core.exceptions import InvalidArgumentError, InvalidShapeError
from compenkit.core.logging import get_logger
from compenkit.geometry.grids import identity_grid
from compenkit.simulator.patterns import surface_texture
from compenkit.tensor import Tensor, as_array, grid_sample_bilinear, no_grad

logger = get_logger(__name__)

MIN_SIZE = 32
MAX_CORNER_SHIFT = 0.1
INPUT_TOLERANCE = 1e-6

SceneKind = Literal["generated", "ideal"]


class SceneSetup(BaseModel):
    """Complete, immutable description of one synthetic setup."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    seed: int = Field(..., ge=0)
    kind: SceneKind = "generated"
    height: int = Field(..., ge=MIN_SIZE)
    width: int = Field(..., ge=MIN_SIZE)
    surface_texture: np.ndarray = Field(..., description="(H, W, 3) texture in [0, 1]")
    homography: np.ndarray = Field(..., description="3x3 camera->projector map, normalized coords")
    displacement_amplitude: np.ndarray = Field(..., description="(2,) x/y amplitude")
    displacement_frequency: np.ndarray = Field(..., description="(2, 2) cycles per unit length")
    displacement_phase: np.ndarray = Field(..., description="(2, 2) phases in radians")
    color_mix: np.ndarray = Field(..., description="3x3 non-negative channel mixing")
    reflectance_blend: float = Field(..., ge=0.0, le=1.0)
    projector_gamma: np.ndarray
    camera_gamma: np.ndarray
    ambient: np.ndarray
    noise_sigma: float = Field(..., ge=0.0)

    @model_validator(mode="after")
    def validate_physics(self) -> "SceneSetup":
        """Reject setups the forward model cannot represent."""
        if self.surface_texture.shape != (self.height, self.width, 3):
            raise ValueError("surface_texture must have shape (height, width, 3)")
        if self.surface_texture.min() < 0.0 or self.surface_texture.max() > 1.0:
            raise ValueError("surface_texture must lie in [0, 1]")
        if self.homography.shape != (3, 3) or abs(np.linalg.det(self.homography)) < 1e-12:
            raise ValueError("homography must be an invertible 3x3 matrix")
        if self.color_mix.shape != (3, 3) or np.any(self.color_mix < 0.0):
            raise ValueError("color_mix must be a non-negative 3x3 matrix")
        for name in ("projector_gamma", "camera_gamma"):
            gamma = getattr(self, name)
            if gamma.shape != (3,) or np.any(gamma <= 0.0):
                raise ValueError(f"{name} must hold three positive exponents")
        if self.ambient.shape != (3,) or np.any(self.ambient < 0.0) or np.any(self.ambient > 1.0):
            raise ValueError("ambient must hold three values in [0, 1]")
        return self

    @property
    def size(self) -> tuple[int, int]:
        return self.height, self.width

    def reflectance(self) -> np.ndarray:
        """(3, H, W) per-pixel reflectance."""
        blend = self.reflectance_blend
        return ((1.0 - blend) + blend * self.surface_texture).transpose(2, 0, 1)

    def fingerprint(self) -> str:
        """SHA-256 over every field, for determinism checks."""
        digest = hashlib.sha256()
        for name in type(self).model_fields:
            value = getattr(self, name)
            digest.update(name.encode())
            if isinstance(value, np.ndarray):
                digest.update(np.ascontiguousarray(value, dtype=np.float64).tobytes())
            else:
                digest.update(repr(value).encode())
        return digest.hexdigest()


def homography_from_corners(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """
    Direct linear transform for four point correspondences.

    Returns:
        3x3 matrix H with H @ [src, 1] proportional to [dst, 1], H[2, 2] = 1
    """
    rows = []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u])
        rows.append([0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v])
    _, _, vt = np.linalg.svd(np.asarray(rows))
    matrix = vt[-1].reshape(3, 3)
    return matrix / matrix[2, 2]


def apply_homography(matrix: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Map (..., 2) points through a 3x3 homography."""
    flat = points.reshape(-1, 2)
    homogeneous = np.concatenate([flat, np.ones((flat.shape[0], 1))], axis=1) @ matrix.T
    mapped = homogeneous[:, :2] / homogeneous[:, 2:3]
    return mapped.reshape(points.shape)


def homography_grid(matrix: np.ndarray, height: int, width: int) -> np.ndarray:
    """Sampling grid whose pixel p reads the source at ``matrix`` applied to p."""
    return apply_homography(matrix, identity_grid(height, width, np.float64))


def _displacement(scene: SceneSetup, mesh: np.ndarray) -> np.ndarray:
    u, v = mesh[..., 0], mesh[..., 1]
    out = np.zeros_like(mesh)
    for axis in range(2):
        f = scene.displacement_frequency[axis]
        ph = scene.displacement_phase[axis]
        wave = np.sin(np.pi * f[0] * v + ph[0]) + np.sin(np.pi * f[1] * u + ph[1])
        out[..., axis] = 0.5 * scene.displacement_amplitude[axis] * wave
    return out


def sampling_grid(scene: SceneSetup) -> np.ndarray:
    """(H, W, 2) camera -> projector grid including the displacement field."""
    mesh = identity_grid(scene.height, scene.width, np.float64)
    return apply_homography(scene.homography, mesh) + _displacement(scene, mesh)


def gen_setup(
    seed: int,
    size: tuple[int, int],
    noise_sigma: Optional[float] = None,
    noiseless: bool = False,
) -> SceneSetup:
    """
    Draw a pseudo-random setup.

    Args:
        seed: Generator seed; equal seeds give bit-identical setups
        size: (height, width) of projector and camera images
        noise_sigma: Override of the drawn camera noise level
        noiseless: Force the camera noise to zero

    Raises:
        InvalidArgumentError: If either side is smaller than 32 pixels
    """
    height, width = size
    if height < MIN_SIZE or width < MIN_SIZE:
        raise InvalidArgumentError("setup size must be at least 32x32", height=height, width=width)
    if seed < 0:
        raise InvalidArgumentError("seed must be non-negative", seed=seed)
    rng = np.random.default_rng(seed)

    texture = surface_texture(rng, height, width)
    corners = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    shifted = corners + rng.uniform(-MAX_CORNER_SHIFT, MAX_CORNER_SHIFT, size=corners.shape)
    homography = homography_from_corners(corners, shifted)
    amplitude = rng.uniform(0.01, 0.03, size=2)
    frequency = rng.uniform(0.5, 1.5, size=(2, 2))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(2, 2))
    diagonal = rng.uniform(0.75, 0.95, size=3)
    color_mix = np.diag(diagonal) + (1.0 - np.eye(3)) * rng.uniform(0.0, 0.1, size=(3, 3))
    blend = float(rng.uniform(0.3, 0.7))
    projector_gamma = rng.uniform(1.8, 2.4, size=3)
    camera_gamma = rng.uniform(1.8, 2.4, size=3)
    ambient = rng.uniform(0.0, 0.15, size=3)
    drawn_sigma = float(rng.uniform(0.002, 0.01))

    if noiseless:
        sigma = 0.0
    elif noise_sigma is not None:
        sigma = float(noise_sigma)
    else:
        sigma = drawn_sigma

    scene = SceneSetup(
        seed=seed,
        height=height,
        width=width,
        surface_texture=texture,
        homography=homography,
        displacement_amplitude=amplitude,
        displacement_frequency=frequency,
        displacement_phase=phase,
        color_mix=color_mix,
        reflectance_blend=blend,
        projector_gamma=projector_gamma,
        camera_gamma=camera_gamma,
        ambient=ambient,
        noise_sigma=sigma,
    )
    logger.debug("scene_generated", seed=seed, height=height, width=width, noise_sigma=sigma)
    return scene


def ideal_setup(size: tuple[int, int], seed: int = 0, ambient: float = 0.0) -> SceneSetup:
    """Identity simulator: no warp, unit reflectance, unit gammas, no noise."""
    height, width = size
    return SceneSetup(
        seed=seed,
        kind="ideal",
        height=height,
        width=width,
        surface_texture=np.ones((height, width, 3)),
        homography=np.eye(3),
        displacement_amplitude=np.zeros(2),
        displacement_frequency=np.ones((2, 2)),
        displacement_phase=np.zeros((2, 2)),
        color_mix=np.eye(3),
        reflectance_blend=0.0,
        projector_gamma=np.ones(3),
        camera_gamma=np.ones(3),
        ambient=np.full(3, ambient),
        noise_sigma=0.0,
    )


def _as_batch(x: Any, scene: SceneSetup) -> np.ndarray:
    array = np.asarray(as_array(x), dtype=np.float64)
    if array.ndim == 3:
        array = array[None]
    if array.ndim != 4 or array.shape[1:] != (3, scene.height, scene.width):
        raise InvalidShapeError(
            "projector input must be (N, 3, H, W) at the setup size",
            expected=(3, scene.height, scene.width),
            got=array.shape,
        )
    if array.min() < -INPUT_TOLERANCE or array.max() > 1.0 + INPUT_TOLERANCE:
        raise InvalidArgumentError(
            "projector input must lie in [0, 1]", low=float(array.min()), high=float(array.max())
        )
    return np.clip(array, 0.0, 1.0)


def photometric_response(x: Any, scene: SceneSetup) -> np.ndarray:
    """Pre-warp response r in the projector frame, shape (N, 3, H, W)."""
    batch = _as_batch(x, scene)
    lit = batch ** scene.projector_gamma[None, :, None, None]
    mixed = np.einsum("ij,njhw->nihw", scene.color_mix, lit) + scene.ambient[None, :, None, None]
    return scene.reflectance()[None] * np.clip(mixed, 0.0, 1.0)


def render_capture(x: Any, scene: SceneSetup, index: int = 0) -> Tensor:
    """
    Simulate projecting ``x`` and capturing it with the camera.

    Args:
        x: Projector input (N, 3, H, W) or (3, H, W) in [0, 1]
        scene: Setup to render with
        index: Render index of the first image; image i of the batch uses
            noise stream ``index + i``

    Returns:
        Captured images (N, 3, H, W) in [0, 1]

    Raises:
        InvalidArgumentError: If x leaves [0, 1]
        InvalidShapeError: If x does not match the setup size
    """
    response = photometric_response(x, scene)
    with no_grad():
        warped = grid_sample_bilinear(Tensor(response), Tensor(sampling_grid(scene))).data
    captured = np.clip(warped, 0.0, 1.0) ** (1.0 / scene.camera_gamma[None, :, None, None])
    if scene.noise_sigma > 0.0:
        for i in range(captured.shape[0]):
            rng = np.random.default_rng((scene.seed, index + i))
            captured[i] += rng.normal(0.0, scene.noise_sigma, size=captured[i].shape)
    return Tensor(np.clip(captured, 0.0, 1.0).astype(np.float32))
