"""
Photometric compensation network operating in unshuffled space.

Both the warped desired image and the warped surface image are rearranged by
pixel unshuffle, gated by pixel attention and passed through one shared
(siamese) encoder. The decoder works on the feature differences at the
deepest level and receives the two shallower differences through skip
convolutions; pixel shuffle restores full resolution.
"""

from typing import Optional

import numpy as np

from compenkit.core.exceptions import InvalidShapeError
from compenkit.tensor import (
    Conv2d,
    ConvTranspose2d,
    Module,
    PixelAttention,
    Tensor,
    clamp01,
    expand_batch,
    pixel_shuffle,
    pixel_unshuffle,
    relu,
)

Pyramid = tuple[Tensor, Tensor, Tensor]


def pixel_attention(gate: PixelAttention, m: Tensor) -> Tensor:
    """Apply a pixel-attention gate, checking its width against the feature map."""
    if m.ndim != 4 or m.shape[1] != gate.channels:
        raise InvalidShapeError(
            "attention width differs from feature channels", channels=gate.channels, shape=m.shape
        )
    return gate(m)


class PANet(Module):
    """Siamese encoder, skip-connected decoder and shuffle factor ``k``."""

    def __init__(
        self,
        k: int = 2,
        channels: int = 3,
        widths: tuple[int, int, int] = (32, 64, 128),
        use_p1: bool = True,
        use_p2: bool = True,
        rng: Optional[np.random.Generator] = None,
    ):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.k = k
        self.channels = channels
        self.use_p1 = use_p1
        self.use_p2 = use_p2
        ck = channels * k * k
        e1, e2, e3 = widths
        self.in_channels = ck

        if use_p1:
            self.p1 = PixelAttention(ck, rng=rng)
        self.enc1 = Conv2d(ck, e1, rng=rng)
        if use_p2:
            self.p2 = PixelAttention(e1, rng=rng)
        self.enc2 = Conv2d(e1, e2, stride=2, rng=rng)
        self.enc3 = Conv2d(e2, e3, stride=2, rng=rng)

        self.dec1 = Conv2d(e3, e3, rng=rng)
        self.up1 = ConvTranspose2d(e3, e2, rng=rng)
        self.green1 = Conv2d(e2, e2, kernel=1, rng=rng)
        self.green2 = Conv2d(e2, e2, rng=rng)
        self.dec2 = Conv2d(e2, e2, rng=rng)
        self.up2 = ConvTranspose2d(e2, e1, rng=rng)
        self.yellow1 = Conv2d(e1, e1, kernel=1, rng=rng)
        self.yellow2 = Conv2d(e1, e1, rng=rng)
        self.yellow3 = Conv2d(e1, e1, rng=rng)
        self.dec3 = Conv2d(e1, e1, rng=rng)
        self.out = Conv2d(e1, ck, rng=rng)

    def encode(self, m0: Tensor, captured: bool = True) -> Pyramid:
        return encode(self, m0, captured)

    def decode(self, feat_x: Pyramid, feat_s: Pyramid) -> Tensor:
        return decode(self, feat_x, feat_s)

    def compensate_features(self, mx: Tensor, ms: Tensor) -> Tensor:
        """Map unshuffled desired and surface features to unshuffled compensation."""
        feat_x = self.encode(mx, captured=True)
        feat_s = self.encode(ms, captured=False)
        if feat_s[0].shape[0] != feat_x[0].shape[0]:
            n = feat_x[0].shape[0]
            feat_s = tuple(expand_batch(f, n) for f in feat_s)  # type: ignore[assignment]
        return self.decode(feat_x, feat_s)

    def forward(self, x_warped: Tensor, s_warped: Tensor) -> Tensor:
        return panet_forward(self, x_warped, s_warped)


def encode(net: PANet, m0: Tensor, captured: bool = True) -> Pyramid:
    """
    Run one siamese branch.

    Args:
        net: Network weights
        m0: Unshuffled image of shape (N, C*k*k, H/k, W/k)
        captured: Whether this is the captured-image branch; only that
            branch passes through the second attention gate

    Returns:
        Features at full, half and quarter of the unshuffled resolution
    """
    if m0.ndim != 4 or m0.shape[1] != net.in_channels:
        raise InvalidShapeError(
            "encoder input has the wrong channel count", expected=net.in_channels, shape=m0.shape
        )
    if m0.shape[2] % 4 or m0.shape[3] % 4:
        raise InvalidShapeError("unshuffled size must be divisible by 4", shape=m0.shape)
    m = pixel_attention(net.p1, m0) if net.use_p1 else m0
    f0 = relu(net.enc1(m))
    if captured and net.use_p2:
        f0 = pixel_attention(net.p2, f0)
    f1 = relu(net.enc2(f0))
    f2 = net.enc3(f1)
    return f0, f1, f2


def decode(net: PANet, feat_x: Pyramid, feat_s: Pyramid) -> Tensor:
    """Decode feature differences back to an unshuffled image of C*k*k channels."""
    if len(feat_x) != 3 or len(feat_s) != 3:
        raise InvalidShapeError("feature pyramids must have three levels")
    for fx, fs in zip(feat_x, feat_s):
        if fx.shape != fs.shape:
            raise InvalidShapeError(
                "feature pyramids disagree", captured=fx.shape, surface=fs.shape
            )
    d0, d1, d2 = (fx - fs for fx, fs in zip(feat_x, feat_s))

    x = relu(net.dec1(d2))
    green = net.green2(relu(net.green1(d1)))
    x = relu(net.up1(x) + green)
    x = relu(net.dec2(x))
    yellow = net.yellow3(relu(net.yellow2(relu(net.yellow1(d0)))))
    x = relu(net.up2(x) + yellow)
    x = relu(net.dec3(x))
    return net.out(x)


def panet_forward(net: PANet, x_warped: Tensor, s_warped: Tensor) -> Tensor:
    """
    Full photometric compensation: unshuffle, compensate, shuffle, clamp.

    Args:
        net: Network weights
        x_warped: Desired (or captured) images in the projector frame, (N, C, H, W)
        s_warped: Surface image in the projector frame, batch 1 or N

    Returns:
        Compensated images of the same shape as ``x_warped`` with values in [0, 1]
    """
    if x_warped.ndim != 4 or s_warped.ndim != 4:
        raise InvalidShapeError("PANet inputs must be 4-D", x=x_warped.shape, s=s_warped.shape)
    if x_warped.shape[1:] != s_warped.shape[1:] or s_warped.shape[0] not in (1, x_warped.shape[0]):
        raise InvalidShapeError(
            "image and surface shapes differ", x=x_warped.shape, s=s_warped.shape
        )
    if x_warped.shape[1] != net.channels:
        raise InvalidShapeError(
            "unexpected channel count", expected=net.channels, shape=x_warped.shape
        )
    k = net.k
    h, w = x_warped.shape[2], x_warped.shape[3]
    if h % k or w % k:
        raise InvalidShapeError("image size must be divisible by k", shape=x_warped.shape, k=k)
    mx = pixel_unshuffle(x_warped, k)
    ms = pixel_unshuffle(s_warped, k)
    return clamp01(pixel_shuffle(net.compensate_features(mx, ms), k))
