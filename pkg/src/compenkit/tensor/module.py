"""
Parameter containers.

A Module registers trainable tensors and child modules as they are assigned
to attributes, in assignment order, and enumerates them under dotted names
(``refine.c1.weight``). Names are unique by construction.
"""

from collections.abc import Iterator, Mapping
from typing import Any

import numpy as np

from compenkit.core.exceptions import InvalidArgumentError, InvalidShapeError
from compenkit.tensor.tensor import Param, Tensor


class Module:
    """Base class for networks built from Tensors."""

    def __init__(self) -> None:
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name: str, value: Any) -> None:
        params: dict[str, Tensor] = self.__dict__.get("_params")  # type: ignore[assignment]
        if params is None:
            raise RuntimeError(f"{type(self).__name__}.__init__ must call super().__init__()")
        children: dict[str, Module] = self.__dict__["_children"]
        params.pop(name, None)
        children.pop(name, None)
        if isinstance(value, Tensor) and value.requires_grad:
            params[name] = value
        elif isinstance(value, Module):
            children[name] = value
        object.__setattr__(self, name, value)

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

    # -- enumeration --------------------------------------------------------------

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, tensor in self._params.items():
            yield f"{prefix}{name}", tensor
        for name, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Param]:
        return [Param(name, tensor) for name, tensor in self.named_parameters()]

    def count_params(self) -> int:
        """Total number of scalar parameters."""
        return sum(tensor.size for _, tensor in self.named_parameters())

    def zero_grad(self) -> None:
        for _, tensor in self.named_parameters():
            tensor.grad = None

    # -- state ------------------------------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self.named_parameters()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        """
        Copy arrays into the registered parameters in place.

        Raises:
            InvalidArgumentError: If the parameter names differ
            InvalidShapeError: If an array has the wrong shape
        """
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise InvalidArgumentError(
                "parameter names do not match", missing=missing, unexpected=unexpected
            )
        for name, tensor in own.items():
            array = np.asarray(state[name])
            if array.shape != tensor.shape:
                raise InvalidShapeError(
                    "parameter shape mismatch", name=name, expected=tensor.shape, got=array.shape
                )
            tensor.data = np.array(array, dtype=tensor.dtype, order="C")

    def astype(self, dtype: np.dtype) -> "Module":
        """Convert every parameter to ``dtype`` in place and return self."""
        for _, tensor in self.named_parameters():
            tensor.data = np.ascontiguousarray(tensor.data, dtype=dtype)
            tensor.grad = None
        return self

    def __repr__(self) -> str:
        return f"{type(self).__name__}(params={self.count_params()})"
