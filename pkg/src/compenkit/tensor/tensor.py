"""
Dense tensors with reverse-mode differentiation.

A Tensor wraps a numpy array. Every operation on tensors that require
gradients records its parents and a vector-Jacobian closure; ``backward``
walks the recorded graph in reverse topological order and adds
d(loss)/d(tensor) into ``grad`` of every tensor created with
``requires_grad=True`` or derived from one. Gradients accumulate across
calls until they are reset explicitly (``zero_grad`` or ``grad = None``).

Storage defaults to float32; float64 arrays are kept in double precision so
that finite-difference checks can run on the same code path.
"""

from __future__ import annotations

import contextlib
from collections.abc import Callable, Iterator, Sequence
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Any, Optional, Union

import numpy as np

from compenkit.core.exceptions import InvalidArgumentError, InvalidShapeError, NonFiniteError

DEFAULT_DTYPE = np.float32
_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
Operand = Union["Tensor", float, int]
Axis = Union[int, tuple[int, ...]]

_grad_enabled: ContextVar[bool] = ContextVar("compenkit_grad_enabled", default=True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Run forward passes without recording the graph."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


class Tensor:
    """N-dimensional float array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")
    __array_priority__ = 100

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        dtype: Optional[np.dtype] = None,
    ):
        array = data.data if isinstance(data, Tensor) else np.asarray(data)
        if dtype is None:
            dtype = array.dtype if array.dtype in _FLOAT_DTYPES else DEFAULT_DTYPE
        array = np.asarray(array, dtype=dtype)
        if not array.flags.c_contiguous:
            array = np.ascontiguousarray(array)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[BackwardFn] = None
        self.op = ""

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_op(
        cls,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        backward: BackwardFn,
        op: str,
    ) -> "Tensor":
        """Create the result of an operation and link it into the graph."""
        if not np.all(np.isfinite(data)):
            raise NonFiniteError("operation produced non-finite values", op=op)
        out = cls(data)
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
            out.op = op
        return out

    def _lift(self, other: Operand) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    # -- array protocol -------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise InvalidShapeError("item() needs a single-element tensor", shape=self.shape)
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- differentiation ------------------------------------------------------

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """
        Populate ``grad`` of every tracked tensor reachable from this one.

        Args:
            grad: Upstream gradient; only optional for scalar tensors

        Raises:
            InvalidArgumentError: If called on a non-scalar without ``grad``
        """
        if grad is None:
            if self.data.size != 1:
                raise InvalidArgumentError("backward() needs a scalar loss", shape=self.shape)
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
            if grad.shape != self.shape:
                raise InvalidShapeError(
                    "upstream gradient shape mismatch", expected=self.shape, got=grad.shape
                )

        pending: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(self._topological_order()):
            node_grad = pending.pop(id(node), None)
            if node_grad is None:
                continue
            if node.requires_grad:
                node_grad = node_grad.astype(node.dtype, copy=False)
                node.grad = node_grad if node.grad is None else node.grad + node_grad
            if node._backward is None:
                continue
            for parent, parent_grad in zip(node._parents, node._backward(node_grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = parent_grad if key not in pending else pending[key] + parent_grad

    def _topological_order(self) -> list["Tensor"]:
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def zero_grad(self) -> None:
        self.grad = None

    # -- elementwise arithmetic -----------------------------------------------

    def __add__(self, other: Operand) -> "Tensor":
        other = self._lift(other)
        _check_elementwise("add", self, other)
        return Tensor.from_op(
            self.data + other.data,
            (self, other),
            lambda g: (_reduce_to(g, self.shape), _reduce_to(g, other.shape)),
            "add",
        )

    __radd__ = __add__

    def __sub__(self, other: Operand) -> "Tensor":
        other = self._lift(other)
        _check_elementwise("sub", self, other)
        return Tensor.from_op(
            self.data - other.data,
            (self, other),
            lambda g: (_reduce_to(g, self.shape), _reduce_to(-g, other.shape)),
            "sub",
        )

    def __rsub__(self, other: Operand) -> "Tensor":
        return self._lift(other) - self

    def __mul__(self, other: Operand) -> "Tensor":
        other = self._lift(other)
        _check_elementwise("mul", self, other)
        a, b = self.data, other.data
        return Tensor.from_op(
            a * b,
            (self, other),
            lambda g: (_reduce_to(g * b, self.shape), _reduce_to(g * a, other.shape)),
            "mul",
        )

    __rmul__ = __mul__

    def __truediv__(self, other: Operand) -> "Tensor":
        other = self._lift(other)
        _check_elementwise("div", self, other)
        a, b = self.data, other.data
        return Tensor.from_op(
            a / b,
            (self, other),
            lambda g: (_reduce_to(g / b, self.shape), _reduce_to(-g * a / (b * b), other.shape)),
            "div",
        )

    def __rtruediv__(self, other: Operand) -> "Tensor":
        return self._lift(other) / self

    def __neg__(self) -> "Tensor":
        return Tensor.from_op(-self.data, (self,), lambda g: (-g,), "neg")

    def __pow__(self, exponent: float) -> "Tensor":
        if isinstance(exponent, Tensor):
            raise InvalidArgumentError("only scalar exponents are supported")
        a = self.data
        return Tensor.from_op(
            a**exponent,
            (self,),
            lambda g: (g * exponent * a ** (exponent - 1),),
            "pow",
        )

    def abs(self) -> "Tensor":
        a = self.data
        return Tensor.from_op(np.abs(a), (self,), lambda g: (g * np.sign(a),), "abs")

    def astype(self, dtype: Any) -> "Tensor":
        """Cast to another float dtype; the gradient is cast back to the source dtype."""
        dtype = np.dtype(dtype)
        if dtype not in _FLOAT_DTYPES:
            raise InvalidArgumentError("tensors hold float32 or float64", dtype=str(dtype))
        if dtype == self.dtype:
            return self
        source = self.dtype
        return Tensor.from_op(
            self.data.astype(dtype), (self,), lambda g: (g.astype(source),), "astype"
        )

    # -- reductions and shape ---------------------------------------------------

    def sum(self, axis: Optional[Axis] = None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def backward(g: np.ndarray) -> tuple[np.ndarray]:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor.from_op(
            np.asarray(self.data.sum(axis=axis, keepdims=keepdims)), (self,), backward, "sum"
        )

    def mean(self, axis: Optional[Axis] = None, keepdims: bool = False) -> "Tensor":
        total = self.sum(axis=axis, keepdims=keepdims)
        count = self.size // max(total.size, 1)
        return total * (1.0 / count)

    def reshape(self, *shape: Any) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        try:
            reshaped = self.data.reshape(shape)
        except ValueError as exc:
            raise InvalidShapeError("cannot reshape", source=original, target=shape) from exc
        return Tensor.from_op(reshaped, (self,), lambda g: (g.reshape(original),), "reshape")

    def permute(self, *axes: int) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inverse = tuple(int(i) for i in np.argsort(axes))
        return Tensor.from_op(
            np.ascontiguousarray(self.data.transpose(axes)),
            (self,),
            lambda g: (np.ascontiguousarray(g.transpose(inverse)),),
            "permute",
        )

    @property
    def T(self) -> "Tensor":
        if self.ndim != 2:
            raise InvalidShapeError("T is defined for 2-D tensors", shape=self.shape)
        return self.permute(1, 0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        other = self._lift(other)
        if self.ndim != 2 or other.ndim != 2 or self.shape[1] != other.shape[0]:
            raise InvalidShapeError(
                "matmul needs (m, n) @ (n, p)", left=self.shape, right=other.shape
            )
        a, b = self.data, other.data
        return Tensor.from_op(a @ b, (self, other), lambda g: (g @ b.T, a.T @ g), "matmul")

    def __rmatmul__(self, other: Any) -> "Tensor":
        return self._lift(other) @ self


@dataclass(frozen=True)
class Param:
    """A named trainable tensor, as enumerated by a Module."""

    name: str
    tensor: Tensor


def _check_elementwise(kind: str, a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape or a.size == 1 and a.ndim == 0 or b.size == 1 and b.ndim == 0:
        return
    raise InvalidShapeError(
        f"{kind} needs equal shapes or a scalar operand", left=a.shape, right=b.shape
    )


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    return np.asarray(grad.sum()).reshape(shape)


def as_tensor(value: Any, dtype: Optional[np.dtype] = None) -> Tensor:
    """Wrap arrays and numbers; tensors pass through or are cast inside the graph."""
    if isinstance(value, Tensor):
        return value if dtype is None else value.astype(dtype)
    return Tensor(value, dtype=dtype)


def as_array(value: Any) -> np.ndarray:
    """View a tensor or array-like as a numpy array."""
    return value.data if isinstance(value, Tensor) else np.asarray(value)
