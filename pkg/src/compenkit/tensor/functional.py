"""
Differentiable image operations on Tensors.

Convolutions are computed on strided window views of the padded input and
contracted with ``numpy.tensordot``; their input gradients scatter back with
one strided slice-add per kernel tap. All ops take and return NCHW tensors.
"""

from typing import Literal, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from compenkit.core.exceptions import InvalidArgumentError, InvalidShapeError
from compenkit.tensor.tensor import Operand, Tensor, as_tensor

ActivationKind = Literal["relu", "sigmoid"]
ElementwiseKind = Literal["add", "sub", "mul", "clamp01"]


def _check_hyper(stride: int, padding: int) -> None:
    if stride < 1:
        raise InvalidArgumentError("stride must be >= 1", stride=stride)
    if padding < 0:
        raise InvalidArgumentError("padding must be >= 0", padding=padding)


def _pad(a: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return a
    return np.pad(a, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _unpad(a: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return a
    return a[:, :, padding:-padding, padding:-padding]


def _windows(a: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(N, C, H, W) -> (N, C, Ho, Wo, kh, kw) view."""
    return sliding_window_view(a, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def _scatter_taps(cols: np.ndarray, out_shape: tuple[int, ...], stride: int) -> np.ndarray:
    """Add (N, Ho, Wo, C, kh, kw) tap values back onto an (N, C, H, W) plane."""
    n, ho, wo, c, kh, kw = cols.shape
    out = np.zeros(out_shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[
                :, :, :, :, i, j
            ].transpose(0, 3, 1, 2)
    return out


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """
    2-D cross-correlation.

    Args:
        x: Input of shape (N, C, H, W)
        weight: Kernel of shape (out_ch, C, kh, kw)
        bias: Optional bias of shape (out_ch,)
        stride: Step between windows, at least 1
        padding: Zero padding on every side

    Returns:
        Tensor of shape (N, out_ch, (H + 2p - kh) // s + 1, (W + 2p - kw) // s + 1)

    Raises:
        InvalidShapeError: On rank or channel mismatch
        InvalidArgumentError: On negative padding or non-positive stride
    """
    _check_hyper(stride, padding)
    if x.ndim != 4 or weight.ndim != 4:
        raise InvalidShapeError(
            "conv2d needs 4-D input and weight", input=x.shape, weight=weight.shape
        )
    out_ch, in_ch, kh, kw = weight.shape
    if x.shape[1] != in_ch:
        raise InvalidShapeError("conv2d channel mismatch", input=x.shape, weight=weight.shape)
    if bias is not None and bias.shape != (out_ch,):
        raise InvalidShapeError("conv2d bias must have shape (out_ch,)", bias=bias.shape)
    if x.shape[2] + 2 * padding < kh or x.shape[3] + 2 * padding < kw:
        raise InvalidShapeError(
            "kernel larger than padded input", input=x.shape, weight=weight.shape
        )

    xp = _pad(x.data, padding)
    win = _windows(xp, kh, kw, stride)
    w = weight.data
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
        gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        cols = np.tensordot(g.transpose(0, 2, 3, 1), w, axes=([3], [0]))
        gx = _unpad(_scatter_taps(cols, xp.shape, stride), padding)
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(np.ascontiguousarray(out), parents, backward, "conv2d")


def conv_transpose2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """
    Transposed 2-D convolution, the adjoint of ``conv2d``.

    ``weight`` is laid out (in_ch, out_ch, kh, kw). The output spatial size is
    (H - 1) * stride - 2 * padding + kh.
    """
    _check_hyper(stride, padding)
    if x.ndim != 4 or weight.ndim != 4:
        raise InvalidShapeError(
            "conv_transpose2d needs 4-D input and weight", input=x.shape, weight=weight.shape
        )
    in_ch, out_ch, kh, kw = weight.shape
    if x.shape[1] != in_ch:
        raise InvalidShapeError(
            "conv_transpose2d channel mismatch", input=x.shape, weight=weight.shape
        )
    if bias is not None and bias.shape != (out_ch,):
        raise InvalidShapeError("conv_transpose2d bias must have shape (out_ch,)", bias=bias.shape)
    n, _, h, w_in = x.shape
    full_h, full_w = (h - 1) * stride + kh, (w_in - 1) * stride + kw
    if full_h - 2 * padding < 1 or full_w - 2 * padding < 1:
        raise InvalidShapeError("padding removes the whole output", input=x.shape, padding=padding)

    w = weight.data
    cols = np.tensordot(x.data.transpose(0, 2, 3, 1), w, axes=([3], [0]))
    out = _unpad(_scatter_taps(cols, (n, out_ch, full_h, full_w), stride), padding)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
        win = _windows(_pad(g, padding), kh, kw, stride)
        gx = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        gw = np.tensordot(x.data, win, axes=([0, 2, 3], [0, 2, 3]))
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return np.ascontiguousarray(gx), gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(np.ascontiguousarray(out), parents, backward, "conv_transpose2d")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor.from_op(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    s = expit(x.data).astype(x.dtype, copy=False)
    # s * expit(-x) keeps precision where 1 - s would cancel
    slope = s * expit(-x.data).astype(x.dtype, copy=False)
    return Tensor.from_op(s, (x,), lambda g: (g * slope,), "sigmoid")


def activation(x: Tensor, kind: ActivationKind) -> Tensor:
    """Apply ``relu`` or ``sigmoid`` elementwise."""
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise InvalidArgumentError("unknown activation", kind=kind)


def clamp01(x: Tensor) -> Tensor:
    """Clip to [0, 1]; the gradient is zero where the input was clipped."""
    mask = (x.data >= 0.0) & (x.data <= 1.0)
    return Tensor.from_op(np.clip(x.data, 0.0, 1.0), (x,), lambda g: (g * mask,), "clamp01")


def elementwise(kind: ElementwiseKind, a: Tensor, b: Optional[Operand] = None) -> Tensor:
    """
    Dispatch one of the elementwise ops by name.

    Raises:
        InvalidShapeError: If operand shapes differ and neither is a scalar
        InvalidArgumentError: On an unknown kind or a missing operand
    """
    if kind == "clamp01":
        return clamp01(a)
    if b is None:
        raise InvalidArgumentError("binary elementwise op needs a second operand", kind=kind)
    if kind == "add":
        return a + b
    if kind == "sub":
        return a - b
    if kind == "mul":
        return a * b
    raise InvalidArgumentError("unknown elementwise op", kind=kind)


def expand_batch(x: Tensor, n: int) -> Tensor:
    """Repeat a (1, C, H, W) tensor n times along the batch axis."""
    if x.ndim != 4 or x.shape[0] != 1:
        raise InvalidShapeError("expand_batch needs a single-image batch", shape=x.shape)
    if n == 1:
        return x
    return Tensor.from_op(
        np.repeat(x.data, n, axis=0),
        (x,),
        lambda g: (g.sum(axis=0, keepdims=True),),
        "expand_batch",
    )


def pixel_unshuffle(x: Tensor, k: int) -> Tensor:
    """
    Space-to-channel rearrangement: (N, C, H, W) -> (N, C*k*k, H/k, W/k).

    Output channel ``c*k*k + dy*k + dx`` holds pixel (dy, dx) of every k x k
    block of input channel ``c``.
    """
    if k < 1:
        raise InvalidArgumentError("shuffle factor must be >= 1", k=k)
    if x.ndim != 4:
        raise InvalidShapeError("pixel_unshuffle needs a 4-D tensor", shape=x.shape)
    n, c, h, w = x.shape
    if h % k or w % k:
        raise InvalidShapeError("height and width must be divisible by k", shape=x.shape, k=k)

    def forward(a: np.ndarray) -> np.ndarray:
        return a.reshape(n, c, h // k, k, w // k, k).transpose(0, 1, 3, 5, 2, 4).reshape(
            n, c * k * k, h // k, w // k
        )

    def inverse(g: np.ndarray) -> np.ndarray:
        return g.reshape(n, c, k, k, h // k, w // k).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, h, w)

    return Tensor.from_op(forward(x.data), (x,), lambda g: (inverse(g),), "pixel_unshuffle")


def pixel_shuffle(x: Tensor, k: int) -> Tensor:
    """Channel-to-space rearrangement, the exact inverse of ``pixel_unshuffle``."""
    if k < 1:
        raise InvalidArgumentError("shuffle factor must be >= 1", k=k)
    if x.ndim != 4:
        raise InvalidShapeError("pixel_shuffle needs a 4-D tensor", shape=x.shape)
    n, ck, hk, wk = x.shape
    if ck % (k * k):
        raise InvalidShapeError("channel count must be divisible by k*k", shape=x.shape, k=k)
    c = ck // (k * k)

    def forward(a: np.ndarray) -> np.ndarray:
        blocks = a.reshape(n, c, k, k, hk, wk).transpose(0, 1, 4, 2, 5, 3)
        return blocks.reshape(n, c, hk * k, wk * k)

    def inverse(g: np.ndarray) -> np.ndarray:
        return g.reshape(n, c, hk, k, wk, k).transpose(0, 1, 3, 5, 2, 4).reshape(n, ck, hk, wk)

    return Tensor.from_op(forward(x.data), (x,), lambda g: (inverse(g),), "pixel_shuffle")


def grid_sample_bilinear(image: Tensor, grid: Tensor) -> Tensor:
    """
    Bilinearly sample ``image`` at normalized grid coordinates.

    Coordinate (-1, -1) is the center of the top-left pixel and (1, 1) the
    center of the bottom-right pixel. Coordinates outside that range read
    the border-clamped value and pass no gradient to the grid.

    Args:
        image: Source of shape (N, C, Hi, Wi)
        grid: (Ho, Wo, 2) shared by the batch, or (N, Ho, Wo, 2); the last
            axis holds (x, y)

    Returns:
        Tensor of shape (N, C, Ho, Wo)

    Raises:
        InvalidShapeError: If the grid's last axis is not 2 or batch sizes differ
    """
    grid = as_tensor(grid, dtype=image.dtype)
    if image.ndim != 4:
        raise InvalidShapeError("grid_sample needs a 4-D image", shape=image.shape)
    if grid.ndim not in (3, 4) or grid.shape[-1] != 2:
        raise InvalidShapeError("grid must have shape (H, W, 2) or (N, H, W, 2)", grid=grid.shape)
    n, c, hi, wi = image.shape
    shared = grid.ndim == 3
    if not shared and grid.shape[0] != n:
        raise InvalidShapeError(
            "grid batch differs from image batch", image=image.shape, grid=grid.shape
        )
    g4 = grid.data[None] if shared else grid.data
    ho, wo = g4.shape[1], g4.shape[2]

    px_raw = (g4[..., 0] + 1.0) * 0.5 * (wi - 1)
    py_raw = (g4[..., 1] + 1.0) * 0.5 * (hi - 1)
    px = np.clip(px_raw, 0.0, wi - 1)
    py = np.clip(py_raw, 0.0, hi - 1)
    in_x = (px_raw >= 0.0) & (px_raw <= wi - 1)
    in_y = (py_raw >= 0.0) & (py_raw <= hi - 1)
    x0 = np.clip(np.floor(px), 0, max(wi - 2, 0)).astype(np.intp)
    y0 = np.clip(np.floor(py), 0, max(hi - 2, 0)).astype(np.intp)
    x1 = np.minimum(x0 + 1, wi - 1)
    y1 = np.minimum(y0 + 1, hi - 1)
    fx = (px - x0).astype(image.dtype)
    fy = (py - y0).astype(image.dtype)
    bshape = (n, ho, wo)
    x0, x1, y0, y1, fx, fy = (np.broadcast_to(a, bshape) for a in (x0, x1, y0, y1, fx, fy))

    nidx = np.arange(n)[:, None, None]
    img = image.data

    def gather(yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
        return img[nidx, :, yy, xx].transpose(0, 3, 1, 2)

    v00, v01, v10, v11 = gather(y0, x0), gather(y0, x1), gather(y1, x0), gather(y1, x1)
    wx1, wy1 = fx[:, None], fy[:, None]
    wx0, wy0 = 1.0 - wx1, 1.0 - wy1
    out = v00 * wx0 * wy0 + v01 * wx1 * wy0 + v10 * wx0 * wy1 + v11 * wx1 * wy1

    def backward(g: np.ndarray) -> tuple[Optional[np.ndarray], Optional[np.ndarray]]:
        gimg = None
        if image.requires_grad:
            base = (np.arange(n)[:, None] * c + np.arange(c)[None, :]) * (hi * wi)
            base = base[:, :, None, None]
            corners = (
                (y0, x0, wx0 * wy0),
                (y0, x1, wx1 * wy0),
                (y1, x0, wx0 * wy1),
                (y1, x1, wx1 * wy1),
            )
            index = np.concatenate(
                [
                    np.broadcast_to(base + (yy * wi + xx)[:, None], g.shape).ravel()
                    for yy, xx, _ in corners
                ]
            )
            weights = np.concatenate([(g * wt).ravel() for _, _, wt in corners])
            gimg = np.bincount(index, weights=weights, minlength=n * c * hi * wi)
            gimg = gimg.reshape(img.shape).astype(img.dtype)

        ggrid = None
        if grid.requires_grad:
            dfx = ((v01 - v00) * wy0 + (v11 - v10) * wy1) * g
            dfy = ((v10 - v00) * wx0 + (v11 - v01) * wx1) * g
            gx = dfx.sum(axis=1) * in_x * (0.5 * (wi - 1))
            gy = dfy.sum(axis=1) * in_y * (0.5 * (hi - 1))
            ggrid = np.stack([gx, gy], axis=-1).astype(grid.dtype)
            if shared:
                ggrid = ggrid.sum(axis=0)
        return gimg, ggrid

    out = np.ascontiguousarray(out, dtype=img.dtype)
    return Tensor.from_op(out, (image, grid), backward, "grid_sample")
