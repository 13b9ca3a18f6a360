"""Adam optimizer and step learning-rate decay."""

from collections.abc import Sequence

import numpy as np

from compenkit.core.exceptions import InvalidArgumentError
from compenkit.tensor.tensor import Param


def step_decay_lr(lr0: float, factor: float, every: int, iteration: int) -> float:
    """Learning rate at ``iteration`` when divided by ``factor`` every ``every`` steps."""
    if every < 1:
        raise InvalidArgumentError("decay interval must be >= 1", every=every)
    return lr0 / factor ** (iteration // every)


class Adam:
    """Adam with bias-corrected moment estimates."""

    def __init__(
        self,
        params: Sequence[Param],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        if lr <= 0:
            raise InvalidArgumentError("learning rate must be positive", lr=lr)
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p.tensor.data) for p in self.params]
        self.v = [np.zeros_like(p.tensor.data) for p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        for i, param in enumerate(self.params):
            tensor = param.tensor
            if tensor.grad is None:
                continue
            grad = tensor.grad
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad * grad
            m_hat = self.m[i] / bias1
            v_hat = self.v[i] / bias2
            update = self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            tensor.data = tensor.data - update.astype(tensor.dtype, copy=False)

    def zero_grad(self) -> None:
        for param in self.params:
            param.tensor.grad = None
