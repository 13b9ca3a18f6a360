"""Procedural surface textures and sampling images."""

import numpy as np
from scipy import ndimage

from compenkit.core.exceptions import InvalidArgumentError


def _smooth_noise(rng: np.random.Generator, height: int, width: int, cell: int) -> np.ndarray:
    """(3, H, W) value noise with features about ``cell`` pixels wide, in [0, 1]."""
    coarse_h = max(height // cell, 1) + 2
    coarse_w = max(width // cell, 1) + 2
    coarse = rng.random((3, coarse_h, coarse_w))
    fine = ndimage.zoom(coarse, (1, height / (coarse_h - 2), width / (coarse_w - 2)), order=3)
    return np.clip(fine[:, :height, :width], 0.0, 1.0)


def _octaves(
    rng: np.random.Generator, height: int, width: int, cells: tuple[int, ...]
) -> np.ndarray:
    total = np.zeros((3, height, width))
    weight_sum = 0.0
    for i, cell in enumerate(cells):
        weight = 0.5**i
        total += weight * _smooth_noise(rng, height, width, cell)
        weight_sum += weight
    total /= weight_sum
    low, high = total.min(), total.max()
    return (total - low) / max(high - low, 1e-12)


def _ellipse_mask(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    cy, cx = rng.uniform(0, height), rng.uniform(0, width)
    ry = rng.uniform(0.08, 0.3) * height
    rx = rng.uniform(0.08, 0.3) * width
    inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    return ndimage.gaussian_filter(inside.astype(np.float64), sigma=1.0)


def surface_texture(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """
    Colored surface texture of shape (H, W, 3) in [0, 1].

    Blended value-noise octaves with a handful of soft-edged color patches.
    """
    texture = _octaves(rng, height, width, (32, 16, 8, 4))
    for _ in range(int(rng.integers(3, 7))):
        mask = _ellipse_mask(rng, height, width)
        color = rng.uniform(0.2, 1.0, size=3)[:, None, None]
        texture = texture * (1.0 - 0.6 * mask) + 0.6 * mask * color
    return np.clip(texture, 0.0, 1.0).transpose(1, 2, 0)


def sampling_image(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """One (3, H, W) image mixing gradients, noise octaves, stripes and blobs."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    yy /= max(height - 1, 1)
    xx /= max(width - 1, 1)
    angle = rng.uniform(0, 2 * np.pi)
    ramp = np.cos(angle) * xx + np.sin(angle) * yy
    ramp = (ramp - ramp.min()) / max(np.ptp(ramp), 1e-12)
    start, end = rng.random(3), rng.random(3)
    image = start[:, None, None] * (1.0 - ramp) + end[:, None, None] * ramp

    image = 0.5 * image + 0.5 * _octaves(rng, height, width, (24, 12, 6))
    if rng.random() < 0.5:
        freq = rng.uniform(2.0, 10.0)
        stripes = 0.5 + 0.5 * np.sin(2 * np.pi * freq * (xx if rng.random() < 0.5 else yy))
        image = 0.7 * image + 0.3 * stripes[None] * rng.random(3)[:, None, None]
    for _ in range(int(rng.integers(1, 5))):
        mask = _ellipse_mask(rng, height, width)
        color = rng.random(3)[:, None, None]
        image = image * (1.0 - mask) + mask * color
    return np.clip(image, 0.0, 1.0)


def sampling_images(seed: int, count: int, size: tuple[int, int]) -> np.ndarray:
    """
    Deterministic stack of procedural sampling images.

    Image i depends only on (seed, i), so extending ``count`` keeps the
    leading images unchanged.

    Returns:
        Array of shape (count, 3, H, W) in [0, 1], float32
    """
    if count < 1:
        raise InvalidArgumentError("need at least one sampling image", count=count)
    height, width = size
    images = [
        sampling_image(np.random.default_rng((seed, 2, i)), height, width) for i in range(count)
    ]
    return np.stack(images).astype(np.float32)
