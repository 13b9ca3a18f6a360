"""Differentiable training objective: l1, l2 and SSIM terms."""

from collections.abc import Sequence
from functools import lru_cache

import numpy as np

from compenkit.core.exceptions import InvalidArgumentError, InvalidShapeError
from compenkit.core.schemas import LossTerm
from compenkit.tensor import Tensor, conv2d

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2

LOSS_TERMS: tuple[LossTerm, ...] = ("l1", "l2", "ssim")


@lru_cache(maxsize=4)
def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 2-D Gaussian of shape (size, size)."""
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(offsets**2) / (2.0 * sigma**2))
    g /= g.sum()
    window = np.outer(g, g)
    window.setflags(write=False)
    return window


def _check_pair(a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise InvalidShapeError("images must have equal shapes", left=a.shape, right=b.shape)
    if a.ndim != 4:
        raise InvalidShapeError("images must be (N, C, H, W)", shape=a.shape)


def ssim_map(a: Tensor, b: Tensor) -> Tensor:
    """
    Local SSIM over every fully covered 11x11 window, per image and channel.

    Returns:
        Tensor of shape (N * C, 1, H - 10, W - 10)

    Raises:
        InvalidArgumentError: If the images are smaller than the window
    """
    _check_pair(a, b)
    n, c, h, w = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise InvalidArgumentError("images are smaller than the SSIM window", shape=a.shape)
    window = Tensor(gaussian_window()[None, None].astype(a.dtype))
    x = a.reshape(n * c, 1, h, w)
    y = b.reshape(n * c, 1, h, w)

    mu_x = conv2d(x, window)
    mu_y = conv2d(y, window)
    mu_xx = mu_x * mu_x
    mu_yy = mu_y * mu_y
    mu_xy = mu_x * mu_y
    var_x = conv2d(x * x, window) - mu_xx
    var_y = conv2d(y * y, window) - mu_yy
    cov = conv2d(x * y, window) - mu_xy

    numerator = (mu_xy * 2.0 + SSIM_C1) * (cov * 2.0 + SSIM_C2)
    denominator = (mu_xx + mu_yy + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return numerator / denominator


def ssim_tensor(a: Tensor, b: Tensor) -> Tensor:
    """Mean SSIM as a differentiable scalar."""
    return ssim_map(a, b).mean()


def loss_components(x_hat: Tensor, x: Tensor) -> dict[str, Tensor]:
    """All three loss terms as scalar tensors: l1, l2 and ssim (= 1 - SSIM)."""
    _check_pair(x_hat, x)
    diff = x_hat - x
    return {
        "l1": diff.abs().mean(),
        "l2": (diff * diff).mean(),
        "ssim": 1.0 - ssim_tensor(x_hat, x),
    }


def combine(components: dict[str, Tensor], terms: Sequence[LossTerm]) -> Tensor:
    """Unweighted sum of the selected terms."""
    if not terms:
        raise InvalidArgumentError("at least one loss term is required")
    unknown = [t for t in terms if t not in LOSS_TERMS]
    if unknown:
        raise InvalidArgumentError("unknown loss term", terms=unknown)
    total = components[terms[0]]
    for term in terms[1:]:
        total = total + components[term]
    return total


def loss(x_hat: Tensor, x: Tensor, terms: Sequence[LossTerm] = LOSS_TERMS) -> Tensor:
    """
    Training loss between the predicted and the target images.

    Args:
        x_hat: Predicted images (N, C, H, W)
        x: Target images of the same shape
        terms: Subset of ``l1``, ``l2``, ``ssim``

    Returns:
        Scalar tensor
    """
    return combine(loss_components(x_hat, x), terms)
