"""Dense tensors with reverse-mode differentiation.

A ``Tensor`` wraps a numpy array. Every differentiable primitive records its
parents and a backward closure on the result; ``Graph`` orders those records
topologically and ``backward`` walks them in reverse exactly once.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable, Sequence
from typing import Any, Literal

import numpy as np
from scipy.special import expit

from triplegan.core.errors import ContractError, DimensionError

DType = Literal["f32", "f64"]
NUMPY_DTYPES: dict[str, type[np.floating]] = {"f32": np.float32, "f64": np.float64}

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]
GradientMap = dict["Tensor", np.ndarray]


def _dtype_code(array: np.ndarray) -> DType:
    return "f32" if array.dtype == np.float32 else "f64"


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "parents", "backward_fn", "op")

    def __init__(
        self,
        data: Any,
        *,
        requires_grad: bool = False,
        name: str | None = None,
        dtype: DType | None = None,
    ) -> None:
        if dtype is not None:
            array = np.asarray(data, dtype=NUMPY_DTYPES[dtype])
        else:
            array = np.asarray(data)
            if array.dtype not in (np.float32, np.float64):
                array = array.astype(np.float64)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.name = name
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn: BackwardFn | None = None
        self.op = "leaf"

    @classmethod
    def from_op(
        cls, data: np.ndarray, parents: Sequence[Tensor], backward_fn: BackwardFn, op: str
    ) -> Tensor:
        out = cls(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out.parents = tuple(parents)
            out.backward_fn = backward_fn
        out.op = op
        return out

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"<Tensor{label} shape={self.shape} dtype={self.dtype} op={self.op}>"

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def dtype(self) -> DType:
        return _dtype_code(self.data)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def T(self) -> Tensor:
        return transpose(self)

    @property
    def is_leaf(self) -> bool:
        return not self.parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def sum(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        return mean(self, axis=axis, keepdims=keepdims)

    def __neg__(self) -> Tensor:
        return neg(self)

    def __add__(self, other: Any) -> Tensor:
        return add(self, other)

    def __radd__(self, other: Any) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Any) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: Any) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: Any) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: Any) -> Tensor:
        return mul(other, self)

    def __truediv__(self, other: Any) -> Tensor:
        return div(self, other)

    def __rtruediv__(self, other: Any) -> Tensor:
        return div(other, self)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)


class Parameter(Tensor):
    """Named trainable leaf."""

    __slots__ = ()

    def __init__(self, data: Any, name: str, dtype: DType | None = None) -> None:
        super().__init__(data, requires_grad=True, name=name, dtype=dtype)


def as_tensor(value: Any, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    if like is not None:
        return Tensor(np.asarray(value, dtype=like.data.dtype))
    return Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _binary(a: Any, b: Any) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a: Any, b: Any) -> Tensor:
    a, b = _binary(a, b)
    return Tensor.from_op(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a: Any, b: Any) -> Tensor:
    a, b = _binary(a, b)
    return Tensor.from_op(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a: Any, b: Any) -> Tensor:
    a, b = _binary(a, b)
    return Tensor.from_op(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a: Any, b: Any) -> Tensor:
    a, b = _binary(a, b)
    return Tensor.from_op(
        a.data / b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
        "div",
    )


def neg(x: Tensor) -> Tensor:
    return Tensor.from_op(-x.data, (x,), lambda g: (-g,), "neg")


def square(x: Tensor) -> Tensor:
    return Tensor.from_op(x.data * x.data, (x,), lambda g: (2.0 * x.data * g,), "square")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor.from_op(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    return Tensor.from_op(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return Tensor.from_op(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(x: Tensor) -> Tensor:
    out = expit(x.data)
    return Tensor.from_op(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softplus(x: Tensor) -> Tensor:
    out = np.logaddexp(0.0, x.data).astype(x.data.dtype, copy=False)
    return Tensor.from_op(out, (x,), lambda g: (g * expit(x.data),), "softplus")


def relu(x: Tensor) -> Tensor:
    mask = (x.data >= 0).astype(x.data.dtype)
    return Tensor.from_op(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    scale = np.where(x.data >= 0, 1.0, slope).astype(x.data.dtype)
    return Tensor.from_op(x.data * scale, (x,), lambda g: (g * scale,), "lrelu")


# ---------------------------------------------------------------------------
# Reductions and linear algebra
# ---------------------------------------------------------------------------


def sum_(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor.from_op(
        np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), backward, "sum"
    )


def mean(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else x.shape[axis]
    return sum_(x, axis=axis, keepdims=keepdims) * (1.0 / count)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes {a.shape} and {b.shape} do not agree")
    return Tensor.from_op(
        a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul"
    )


def transpose(x: Tensor) -> Tensor:
    return Tensor.from_op(x.data.T, (x,), lambda g: (g.T,), "transpose")


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    if int(np.prod(shape)) != x.size:
        raise DimensionError(f"cannot reshape {x.shape} into {shape}")
    return Tensor.from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


# ---------------------------------------------------------------------------
# Graph traversal
# ---------------------------------------------------------------------------


class Graph:
    """Ancestors of ``output`` in topological order (inputs before consumers)."""

    def __init__(self, output: Tensor) -> None:
        self.output = output
        self.nodes: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node.parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self._ids = seen

    def __contains__(self, tensor: Tensor) -> bool:
        return id(tensor) in self._ids

    def __len__(self) -> int:
        return len(self.nodes)


def backward(graph: Graph, loss: Tensor, params: Iterable[Tensor] | None = None) -> GradientMap:
    """Reverse-mode gradients of scalar ``loss`` with respect to every trainable leaf.

    Parameters listed in ``params`` that the loss never touches get a zero gradient.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss not in graph:
        raise ContractError("loss is not part of the graph")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    result: GradientMap = {}
    for node in reversed(graph.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            if node.requires_grad:
                result[node] = g
            continue
        assert node.backward_fn is not None
        for parent, parent_grad in zip(node.parents, node.backward_fn(g), strict=True):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + parent_grad
            else:
                grads[key] = parent_grad.astype(parent.data.dtype, copy=False)

    for param in params or ():
        if param not in result:
            result[param] = np.zeros_like(param.data)
    return result


def grad(loss: Tensor, params: Iterable[Tensor] | None = None) -> GradientMap:
    """Shorthand for ``backward(Graph(loss), loss, params)``."""
    return backward(Graph(loss), loss, params)
