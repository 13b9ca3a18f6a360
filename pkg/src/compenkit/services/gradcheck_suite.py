"""
Finite-difference check of every differentiable operation.

Each check builds a small random problem, reduces the op's output to a
scalar with a fixed random projection and compares ``backward`` against
central differences. Inputs are kept away from the kinks of relu, clamp
and bilinear sampling so that both sides of every difference lie on the
same linear piece; inside the networks, where that cannot be arranged for
every unit, coordinates whose one-sided differences disagree are skipped.

The relative error uses a tiny floor, so a gradient that is small but
wrong still fails. Single-precision checks compare the float32 backward
pass against double-precision differences of the same problem.
"""

import time
from collections.abc import Callable, Sequence
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict

from compenkit.core.exceptions import InvalidArgumentError
from compenkit.core.logging import get_logger, log_performance
from compenkit.geometry import GANet, TpsParams, default_control_points
from compenkit.photometric import PANet
from compenkit.tensor import (
    PixelAttention,
    Tensor,
    activation,
    conv2d,
    conv_transpose2d,
    elementwise,
    expand_batch,
    gradcheck,
    grid_sample_bilinear,
    pixel_shuffle,
    pixel_unshuffle,
)

logger = get_logger(__name__)

Problem = tuple[Callable[..., Tensor], list[Tensor]]

Precision = Literal["single", "double"]

# differences are always taken in double precision; single only changes the analytic pass
EPS = 1e-6
ERROR_FLOOR = 1e-8
THRESHOLDS: dict[str, float] = {"double": 1e-5, "single": 1e-3}
THRESHOLD = THRESHOLDS["double"]
KINK_TOLERANCE = THRESHOLD / 4
PRECISIONS: tuple[Precision, ...] = ("double", "single")
DEFAULT_SEEDS = tuple(range(10))
DEFAULT_MAX_SAMPLES = 8

_DTYPES = {"double": np.dtype(np.float64), "single": np.dtype(np.float32)}


class GradcheckResult(BaseModel):
    """Worst relative error of one op over all seeds."""

    model_config = ConfigDict(extra="forbid")

    op: str
    max_error: float
    threshold: float
    seeds: int
    precision: Precision = "double"

    @property
    def passed(self) -> bool:
        return self.max_error < self.threshold


def _projected(fn: Callable[..., Tensor], rng: np.random.Generator) -> Callable[..., Tensor]:
    """Reduce ``fn``'s output to a scalar with a random but fixed projection."""
    weights: dict[tuple[int, ...], Tensor] = {}

    def f(*inputs: Tensor) -> Tensor:
        out = fn(*inputs)
        if out.shape not in weights:
            weights[out.shape] = Tensor(rng.standard_normal(out.shape), dtype=out.dtype)
        return (out * weights[out.shape]).sum()

    return f


def _leaf(data: np.ndarray, dtype: np.dtype) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=dtype)


def _away_from_zero(
    rng: np.random.Generator, shape: tuple[int, ...], margin: float = 0.1
) -> np.ndarray:
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(margin, 1.0, size=shape)


def _conv2d(rng: np.random.Generator, dtype: np.dtype) -> Problem:
    stride = int(rng.integers(1, 3))
    x = _leaf(rng.standard_normal((2, 3, 7, 6)), dtype)
    w = _leaf(rng.standard_normal((4, 3, 3, 3)) * 0.3, dtype)
    b = _leaf(rng.standard_normal(4), dtype)
    return _projected(lambda x, w, b: conv2d(x, w, b, stride, 1), rng), [x, w, b]


def _conv_transpose2d(rng: np.random.Generator, dtype: np.dtype) -> Problem:
    x = _leaf(rng.standard_normal((2, 3, 4, 5)), dtype)
    w = _leaf(rng.standard_normal((3, 2, 4, 4)) * 0.3, dtype)
    b = _leaf(rng.standard_normal(2), dtype)
    return _projected(lambda x, w, b: conv_transpose2d(x, w, b, 2, 1), rng), [x, w, b]


def _relu(rng: np.random.Generator, dtype: np.dtype) -> Problem:
    x = _leaf(_away_from_zero(rng, (2, 3, 4, 4)), dtype)
    return _projected(lambda x: activation(x, "relu"), rng), [x]


def _sigmoid(rng: np.random.Generator, dtype: np.dtype) -> Problem:
    x = _leaf(rng.standard_normal((2, 3, 4, 4)) * 3.0, dtype)
    return _projected(lambda x: activation(x, "sigmoid"), rng), [x]


def _elementwise(rng: np.random.Generator, dtype: np.dtype) -> Problem:
    a = _leaf(rng.standard_normal((2, 3, 4, 4)), dtype)
    b = _leaf(rng.standard_normal((2, 3, 4, 4)), dtype)

    def fn(a: Tensor, b: Tensor) -> Tensor:
        return elementwise("mul", elementwise("add", a, b), elementwise("sub", a, b))

    return _projected(fn, rng), [a, b]


def _clamp01(rng: np.random.Generator, dtype: np.dtype) -> Problem:
    inside = rng.uniform(0.1, 0.9, size=(2, 3, 4, 4))
    outside = rng.choice([-0.5, 1.5], size=inside.shape)
    x = _leaf(np.where(rng.random(inside.shape) < 0.7, inside, outside), dtype)
    return _projected(lambda x: elementwise("clamp01", x), rng), [x]


def _pixel_shuffle(rng: np.random.Generator, dtype: np.dtype) -> Problem:
    x = _leaf(rng.standard_normal((2, 3, 4, 6)), dtype)
    return _projected(lambda x: pixel_shuffle(pixel_unshuffle(x, 2) * 2.0, 2), rng), [x]


def _expand_batch(rng: np.random.Generator, dtype: np.dtype) -> Problem:
    x = _leaf(rng.standard_normal((1, 3, 4, 4)), dtype)
    return _projected(lambda x: expand_batch(x, 3), rng), [x]


def _grid_sample(rng: np.random.Generator, dtype: np.dtype) -> Problem:
    image = _leaf(rng.standard_normal((2, 3, 5, 6)), dtype)
    grid = _leaf(rng.uniform(-0.95, 0.95, size=(2, 4, 4, 2)), dtype)
    return _projected(grid_sample_bilinear, rng), [image, grid]


def _pixel_attention(rng: np.random.Generator, dtype: np.dtype) -> Problem:
    gate = PixelAttention(4, rng=rng).astype(dtype)
    gate.conv.bias.data = rng.standard_normal(4).astype(dtype)
    m = _leaf(rng.standard_normal((2, 4, 5, 5)), dtype)
    inputs = [gate.conv.weight, gate.conv.bias, m]
    return _projected(lambda w, b, m: gate(m), rng), inputs


def _tps_grid(rng: np.random.Generator, dtype: np.dtype) -> Problem:
    count = int(rng.choice([5, 9]))
    tps = TpsParams(default_control_points(count)).astype(dtype)
    tps.offsets.data = (rng.standard_normal(tps.offsets.shape) * 0.05).astype(dtype)
    return _projected(lambda offsets: tps(6, 7), rng), [tps.offsets]


def _ganet(rng: np.random.Generator, dtype: np.dtype) -> Problem:
    net = GANet(refine_widths=(4, 4, 6, 6, 6, 6), rng=rng).astype(dtype)
    # shrink and shift the affine map so samples fall between pixel centers and stay inside
    theta = np.array([[0.8, 0.02, 0.013], [-0.015, 0.78, 0.007]]) + rng.normal(0.0, 0.01, (2, 3))
    net.affine.theta.data = theta.astype(dtype)
    net.tps.offsets.data = (rng.standard_normal(net.tps.offsets.shape) * 0.02).astype(dtype)
    # a residual of a few hundredths keeps refinement gradients well above rounding noise
    net.refine.t2.weight.data = rng.normal(0.0, 0.05, net.refine.t2.weight.shape).astype(dtype)
    image = _leaf(rng.uniform(0.0, 1.0, size=(2, 3, 8, 8)), dtype)
    inputs = [
        net.affine.theta,
        net.tps.offsets,
        net.refine.c1.weight,
        net.refine.r2.conv.weight,
        net.refine.t2.weight,
        image,
    ]
    return _projected(lambda *_: net(image), rng), inputs


def _panet(rng: np.random.Generator, dtype: np.dtype) -> Problem:
    net = PANet(k=2, widths=(4, 6, 8), rng=rng).astype(dtype)
    # small output weights keep the final clamp inactive
    net.out.weight.data = (net.out.weight.data * 0.05).astype(dtype)
    net.out.bias.data = np.full(net.out.bias.shape, 0.5, dtype=dtype)
    x = _leaf(rng.uniform(0.0, 1.0, size=(2, 3, 16, 16)), dtype)
    s = _leaf(rng.uniform(0.0, 1.0, size=(1, 3, 16, 16)), dtype)
    inputs = [
        net.p1.conv.weight,
        net.enc1.weight,
        net.up2.weight,
        net.yellow3.weight,
        net.out.bias,
        x,
        s,
    ]
    return _projected(lambda *_: net(x, s), rng), inputs


CHECKS: dict[str, Callable[[np.random.Generator, np.dtype], Problem]] = {
    "conv2d": _conv2d,
    "conv_transpose2d": _conv_transpose2d,
    "relu": _relu,
    "sigmoid": _sigmoid,
    "elementwise": _elementwise,
    "clamp01": _clamp01,
    "pixel_shuffle": _pixel_shuffle,
    "expand_batch": _expand_batch,
    "grid_sample": _grid_sample,
    "pixel_attention": _pixel_attention,
    "tps_grid": _tps_grid,
    "ganet": _ganet,
    "panet": _panet,
}

SCOPES: dict[str, tuple[str, ...]] = {
    "ops": tuple(name for name in CHECKS if name not in ("ganet", "panet")),
    "networks": ("ganet", "panet"),
    "all": tuple(CHECKS),
}


def resolve_scope(scope: str) -> tuple[str, ...]:
    """A scope is ``all``, ``ops``, ``networks`` or one op name."""
    if scope in SCOPES:
        return SCOPES[scope]
    if scope in CHECKS:
        return (scope,)
    known = sorted([*SCOPES, *CHECKS])
    raise InvalidArgumentError("unknown gradcheck scope", scope=scope, known=known)


def resolve_precisions(precision: str) -> tuple[Precision, ...]:
    """``single``, ``double`` or ``both``."""
    if precision == "both":
        return PRECISIONS
    if precision in THRESHOLDS:
        return (precision,)  # type: ignore[return-value]
    raise InvalidArgumentError(
        "unknown gradcheck precision", precision=precision, known=[*PRECISIONS, "both"]
    )


def _problem(name: str, seed: int, precision: Precision) -> Problem:
    return CHECKS[name](np.random.default_rng((seed, len(name))), _DTYPES[precision])


def check_op(
    name: str,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    max_samples: int = DEFAULT_MAX_SAMPLES,
    precision: Precision = "double",
) -> GradcheckResult:
    """
    Worst relative error of ``name`` over ``seeds``.

    In single precision the analytic gradient of a float32 problem is
    compared against double-precision differences of the same problem,
    built from the same seed and evaluated at the float32 input values.
    """
    (precision,) = resolve_precisions(precision)
    if name not in CHECKS:
        raise InvalidArgumentError("unknown gradcheck op", op=name, known=sorted(CHECKS))
    worst = 0.0
    for seed in seeds:
        f, inputs = _problem(name, seed, precision)
        reference = None
        if precision == "single":
            f_ref, ref_inputs = _problem(name, seed, "double")
            for ref, single in zip(ref_inputs, inputs):
                ref.data[...] = single.data
            reference = (f_ref, ref_inputs)
        error = gradcheck(
            f,
            inputs,
            eps=EPS,
            floor=ERROR_FLOOR,
            max_samples=max_samples,
            seed=seed,
            kink_tol=KINK_TOLERANCE,
            reference=reference,
        )
        worst = max(worst, error)
    return GradcheckResult(
        op=name,
        max_error=worst,
        threshold=THRESHOLDS[precision],
        seeds=len(seeds),
        precision=precision,
    )


def run_suite(
    scope: str = "all",
    seeds: Sequence[int] = DEFAULT_SEEDS,
    max_samples: int = DEFAULT_MAX_SAMPLES,
    precision: str = "double",
) -> list[GradcheckResult]:
    """
    Run the gradient checks of ``scope``.

    Args:
        scope: ``all``, ``ops``, ``networks`` or one op name
        seeds: Random problems per op
        max_samples: Coordinates checked per input
        precision: ``double``, ``single`` or ``both``

    Returns:
        One GradcheckResult per op and precision, ops in registry order
    """
    names = resolve_scope(scope)
    precisions = resolve_precisions(precision)
    start = time.perf_counter()
    results = []
    for name in names:
        for p in precisions:
            result = check_op(name, seeds, max_samples, p)
            logger.info(
                "gradcheck_op",
                op=name,
                precision=p,
                max_error=result.max_error,
                passed=result.passed,
            )
            results.append(result)
    log_performance(logger, "gradcheck", duration_ms=(time.perf_counter() - start) * 1000.0)
    return results
