"""Finite-difference verification of analytic gradients."""

from collections.abc import Callable, Sequence
from typing import Optional

import numpy as np

from compenkit.core.exceptions import DegenerateConfigurationError, InvalidArgumentError
from compenkit.tensor.tensor import Tensor, no_grad

ScalarFn = Callable[..., Tensor]


def _analytic(f: ScalarFn, inputs: Sequence[Tensor]) -> tuple[float, list[np.ndarray]]:
    for tensor in inputs:
        if not tensor.requires_grad:
            raise InvalidArgumentError(
                "gradcheck inputs must require gradients", shape=tensor.shape
            )
        tensor.grad = None
    out = f(*inputs)
    value = out.item()
    out.backward()
    grads = [
        np.zeros(t.shape) if t.grad is None else np.asarray(t.grad, dtype=np.float64)
        for t in inputs
    ]
    return value, grads


def gradcheck(
    f: ScalarFn,
    inputs: Sequence[Tensor],
    eps: float = 1e-6,
    floor: float = 1e-8,
    max_samples: Optional[int] = None,
    seed: int = 0,
    kink_tol: Optional[float] = None,
    reference: Optional[tuple[ScalarFn, Sequence[Tensor]]] = None,
) -> float:
    """
    Compare backward() against central differences.

    ``f(*inputs)`` must return a scalar tensor. Each input is perturbed in
    place, one coordinate at a time, and restored afterwards. Run it in
    double precision for tight tolerances.

    At a point where the derivative jumps (a relu or clamp switching, a
    bilinear sample crossing a cell edge) the central difference is off by
    half the gap between the two one-sided differences. With ``kink_tol``
    set, coordinates whose relative half-gap exceeds it are skipped and
    replaced by other coordinates of the same input.

    Args:
        f: Scalar-valued function of the inputs
        inputs: Tensors with ``requires_grad=True`` to check
        eps: Half-width of the central difference
        floor: Lower bound of the relative-error denominator
        max_samples: Check at most this many coordinates per input, chosen
            deterministically from ``seed``; all coordinates when None
        seed: Seed of the coordinate sampler
        kink_tol: Skip coordinates whose one-sided differences disagree by
            more than this relative amount; never skip when None
        reference: ``(f_ref, inputs_ref)`` evaluating the same problem,
            usually in double precision; differences are taken on it while
            the analytic gradient comes from ``f`` and ``inputs``

    Returns:
        max |analytic - numeric| / max(|analytic|, |numeric|, floor) over
        the checked coordinates

    Raises:
        InvalidArgumentError: If eps is not positive, an input does not
            require gradients or the reference does not match the inputs
        DegenerateConfigurationError: If every coordinate of an input
            straddles a kink
    """
    if eps <= 0:
        raise InvalidArgumentError("eps must be positive", eps=eps)
    _, analytic = _analytic(f, inputs)

    f_num, num_inputs = reference if reference is not None else (f, inputs)
    if len(num_inputs) != len(inputs) or any(
        a.shape != b.shape for a, b in zip(inputs, num_inputs)
    ):
        raise InvalidArgumentError("reference inputs must match the checked inputs")

    rng = np.random.default_rng(seed)
    worst = 0.0
    with no_grad():
        f0 = f_num(*num_inputs).item()
        for position, (tensor, grad) in enumerate(zip(num_inputs, analytic)):
            flat = tensor.data.reshape(-1)
            grad_flat = grad.reshape(-1)
            wanted = flat.size if max_samples is None else min(max_samples, flat.size)
            order = np.arange(flat.size) if max_samples is None else rng.permutation(flat.size)
            checked = 0
            for i in order:
                if checked == wanted:
                    break
                original = flat[i]
                flat[i] = original + eps
                f_plus = f_num(*num_inputs).item()
                flat[i] = original - eps
                f_minus = f_num(*num_inputs).item()
                flat[i] = original
                numeric = (f_plus - f_minus) / (2.0 * eps)
                a = float(grad_flat[i])
                scale = max(abs(a), abs(numeric), floor)
                if kink_tol is not None:
                    half_gap = abs((f_plus - f0) - (f0 - f_minus)) / (2.0 * eps)
                    if half_gap / scale > kink_tol:
                        continue
                worst = max(worst, abs(a - numeric) / scale)
                checked += 1
            if checked == 0 and flat.size:
                raise DegenerateConfigurationError(
                    "no coordinate away from a kink", input=position, shape=tensor.shape
                )
    return worst
