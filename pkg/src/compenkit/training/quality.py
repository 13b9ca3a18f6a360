"""
Image-quality metrics: RMSE, PSNR, SSIM and CIEDE2000.

All metrics take images in [0, 1] shaped (C, H, W) or (N, C, H, W) and
return plain floats computed in double precision.
"""

from typing import Any

import numpy as np

from compenkit.core.exceptions import InvalidArgumentError, InvalidShapeError
from compenkit.core.schemas import ImageMetrics, MetricsRecord
from compenkit.tensor import Tensor, as_array, no_grad
from compenkit.training.losses import ssim_tensor

PSNR_CAP = 100.0
RMSE_FLOOR = 1e-5

# sRGB primaries to CIE XYZ, D65 white
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_D65_WHITE = np.array([0.95047, 1.0, 1.08883])
_LAB_EPSILON = 216.0 / 24389.0
_LAB_KAPPA = 24389.0 / 27.0


def _pair(a: Any, b: Any) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(as_array(a), dtype=np.float64)
    y = np.asarray(as_array(b), dtype=np.float64)
    if x.shape != y.shape:
        raise InvalidShapeError("images must have equal shapes", left=x.shape, right=y.shape)
    return x, y


def rmse(a: Any, b: Any) -> float:
    x, y = _pair(a, b)
    return float(np.sqrt(np.mean((x - y) ** 2)))


def psnr_from_rmse(value: float) -> float:
    if value < RMSE_FLOOR:
        return PSNR_CAP
    return float(20.0 * np.log10(1.0 / value))


def psnr(a: Any, b: Any) -> float:
    """Peak signal-to-noise ratio in dB for unit peak, capped at 100 dB."""
    return psnr_from_rmse(rmse(a, b))


def ssim(a: Any, b: Any) -> float:
    """Mean SSIM (11x11 Gaussian window, sigma 1.5), channel-averaged, in [-1, 1]."""
    x, y = _pair(a, b)
    if x.ndim == 3:
        x, y = x[None], y[None]
    if x.ndim != 4:
        raise InvalidShapeError("images must be (C, H, W) or (N, C, H, W)", shape=x.shape)
    with no_grad():
        value = ssim_tensor(Tensor(x), Tensor(y)).item()
    return float(np.clip(value, -1.0, 1.0))


def srgb_to_linear(rgb: np.ndarray) -> np.ndarray:
    return np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)


def srgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """Convert (..., 3) sRGB values in [0, 1] to CIELAB under D65."""
    linear = srgb_to_linear(np.clip(np.asarray(rgb, dtype=np.float64), 0.0, 1.0))
    xyz = linear @ _RGB_TO_XYZ.T / _D65_WHITE
    f = np.where(xyz > _LAB_EPSILON, np.cbrt(xyz), (_LAB_KAPPA * xyz + 16.0) / 116.0)
    lightness = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([lightness, a, b], axis=-1)


def ciede2000(lab1: np.ndarray, lab2: np.ndarray) -> np.ndarray:
    """
    CIEDE2000 color difference, vectorized over the leading axes.

    Args:
        lab1: (..., 3) CIELAB colors
        lab2: (..., 3) CIELAB colors, broadcastable against ``lab1``

    Returns:
        Array of differences with the broadcast leading shape
    """
    lab1 = np.asarray(lab1, dtype=np.float64)
    lab2 = np.asarray(lab2, dtype=np.float64)
    l1, a1, b1 = lab1[..., 0], lab1[..., 1], lab1[..., 2]
    l2, a2, b2 = lab2[..., 0], lab2[..., 1], lab2[..., 2]

    c_bar = 0.5 * (np.hypot(a1, b1) + np.hypot(a2, b2))
    c_bar7 = c_bar**7
    g = 0.5 * (1.0 - np.sqrt(c_bar7 / (c_bar7 + 25.0**7)))
    a1p = (1.0 + g) * a1
    a2p = (1.0 + g) * a2
    c1p = np.hypot(a1p, b1)
    c2p = np.hypot(a2p, b2)
    h1p = np.degrees(np.arctan2(b1, a1p)) % 360.0
    h2p = np.degrees(np.arctan2(b2, a2p)) % 360.0
    h1p = np.where((a1p == 0.0) & (b1 == 0.0), 0.0, h1p)
    h2p = np.where((a2p == 0.0) & (b2 == 0.0), 0.0, h2p)

    chroma_zero = (c1p * c2p) == 0.0
    dhp = h2p - h1p
    dhp = np.where(dhp > 180.0, dhp - 360.0, dhp)
    dhp = np.where(dhp < -180.0, dhp + 360.0, dhp)
    dhp = np.where(chroma_zero, 0.0, dhp)

    d_l = l2 - l1
    d_c = c2p - c1p
    d_h = 2.0 * np.sqrt(c1p * c2p) * np.sin(np.radians(dhp) / 2.0)

    l_bar = 0.5 * (l1 + l2)
    cp_bar = 0.5 * (c1p + c2p)
    h_sum = h1p + h2p
    h_bar = np.where(
        np.abs(h1p - h2p) <= 180.0,
        0.5 * h_sum,
        np.where(h_sum < 360.0, 0.5 * (h_sum + 360.0), 0.5 * (h_sum - 360.0)),
    )
    h_bar = np.where(chroma_zero, h_sum, h_bar)

    t = (
        1.0
        - 0.17 * np.cos(np.radians(h_bar - 30.0))
        + 0.24 * np.cos(np.radians(2.0 * h_bar))
        + 0.32 * np.cos(np.radians(3.0 * h_bar + 6.0))
        - 0.20 * np.cos(np.radians(4.0 * h_bar - 63.0))
    )
    d_theta = 30.0 * np.exp(-(((h_bar - 275.0) / 25.0) ** 2))
    cp_bar7 = cp_bar**7
    r_c = 2.0 * np.sqrt(cp_bar7 / (cp_bar7 + 25.0**7))
    s_l = 1.0 + 0.015 * (l_bar - 50.0) ** 2 / np.sqrt(20.0 + (l_bar - 50.0) ** 2)
    s_c = 1.0 + 0.045 * cp_bar
    s_h = 1.0 + 0.015 * cp_bar * t
    r_t = -np.sin(np.radians(2.0 * d_theta)) * r_c

    term_l = d_l / s_l
    term_c = d_c / s_c
    term_h = d_h / s_h
    return np.sqrt(term_l**2 + term_c**2 + term_h**2 + r_t * term_c * term_h)


def delta_e(a: Any, b: Any) -> float:
    """
    Mean CIEDE2000 difference between two sRGB images.

    Raises:
        InvalidArgumentError: If the channel axis does not hold three channels
    """
    x, y = _pair(a, b)
    if x.ndim not in (3, 4) or x.shape[-3] != 3:
        raise InvalidArgumentError("delta_e needs 3-channel images", shape=x.shape)
    lab_x = srgb_to_lab(np.moveaxis(x, -3, -1))
    lab_y = srgb_to_lab(np.moveaxis(y, -3, -1))
    return float(np.mean(ciede2000(lab_x, lab_y)))


def measure(a: Any, b: Any) -> ImageMetrics:
    """All four metrics for one (C, H, W) image pair."""
    value = rmse(a, b)
    return ImageMetrics(
        psnr=psnr_from_rmse(value), rmse=value, ssim=ssim(a, b), delta_e=delta_e(a, b)
    )


def aggregate(per_image: list[ImageMetrics]) -> MetricsRecord:
    """Attach the unweighted mean to a list of per-image metrics."""
    if not per_image:
        raise InvalidArgumentError("cannot aggregate an empty metrics list")
    mean = ImageMetrics(
        psnr=float(np.mean([m.psnr for m in per_image])),
        rmse=float(np.mean([m.rmse for m in per_image])),
        ssim=float(np.mean([m.ssim for m in per_image])),
        delta_e=float(np.mean([m.delta_e for m in per_image])),
    )
    return MetricsRecord(per_image=per_image, mean=mean)


def measure_batch(predicted: Any, target: Any) -> MetricsRecord:
    """Per-image metrics of two (N, C, H, W) stacks plus their mean."""
    x, y = _pair(predicted, target)
    if x.ndim != 4:
        raise InvalidShapeError("expected (N, C, H, W) stacks", shape=x.shape)
    return aggregate([measure(xi, yi) for xi, yi in zip(x, y)])
