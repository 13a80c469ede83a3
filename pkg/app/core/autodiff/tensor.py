"""
Dense float64 tensor that doubles as a node of a reverse-mode graph.

A ``Tensor`` owns an immutable numpy array plus, when it was produced by an
operation, references to its inputs and a vector-Jacobian product closure.
The graph is rebuilt on every forward pass; adjoints are never stored on the
tensors themselves but accumulated in a local table by :func:`gradients`, so
parameters and frozen models can be shared read-only between concurrent
evaluations.
"""
from __future__ import annotations

from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.errors import GraphError, NonFiniteError, ShapeMismatchError

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]
VJP = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast adjoint back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Immutable float64 array with optional graph provenance.

    Attributes:
        data: read-only float64 ndarray
        op: name of the producing operation ("leaf" for inputs/parameters)
        parents: input tensors of ``op``
    """

    __slots__ = ("data", "op", "parents", "_vjp")
    # Make numpy defer to our reflected operators (np.float64 * Tensor)
    __array_ufunc__ = None

    def __init__(
        self,
        data: ArrayLike,
        op: str = "leaf",
        parents: Tuple["Tensor", ...] = (),
        vjp: Optional[VJP] = None,
    ) -> None:
        if isinstance(data, Tensor):
            data = data.data
        array = np.array(data, dtype=np.float64)
        if not np.isfinite(array).all():
            raise NonFiniteError(f"operation '{op}' produced non-finite values")
        array.setflags(write=False)
        self.data = array
        self.op = op
        self.parents = parents
        self._vjp = vjp

    # -------- Shape helpers --------
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        """Writable copy of the values."""
        return np.array(self.data)

    def item(self) -> float:
        if self.size != 1:
            raise ShapeMismatchError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Same values, cut from the graph (stop-gradient)."""
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r})"

    # -------- Arithmetic --------
    def __add__(self, other: ArrayLike) -> "Tensor":
        other = lift(other)
        _check_broadcast(self, other, "add")
        a_shape, b_shape = self.shape, other.shape
        return Tensor(
            self.data + other.data,
            "add",
            (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)),
        )

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return lift(other) + self

    def __neg__(self) -> "Tensor":
        return Tensor(-self.data, "neg", (self,), lambda g: (-g,))

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return self + (-lift(other))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return lift(other) + (-self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        other = lift(other)
        _check_broadcast(self, other, "mul")
        a, b = self.data, other.data
        return Tensor(
            a * b,
            "mul",
            (self, other),
            lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
        )

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return lift(other) * self

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        other = lift(other)
        _check_broadcast(self, other, "div")
        a, b = self.data, other.data
        return Tensor(
            a / b,
            "div",
            (self, other),
            lambda g: (
                _unbroadcast(g / b, a.shape),
                _unbroadcast(-g * a / (b * b), b.shape),
            ),
        )

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        other = lift(other)
        if self.ndim != 2 or other.ndim != 2 or self.shape[1] != other.shape[0]:
            raise ShapeMismatchError(f"matmul: cannot multiply {self.shape} by {other.shape}")
        a, b = self.data, other.data
        return Tensor(a @ b, "matmul", (self, other), lambda g: (g @ b.T, a.T @ g))

    def __getitem__(self, index) -> "Tensor":
        shape = self.shape

        def vjp(g: np.ndarray) -> Tuple[np.ndarray]:
            full = np.zeros(shape)
            np.add.at(full, index, g)
            return (full,)

        return Tensor(self.data[index], "index", (self,), vjp)

    # -------- Reductions / reshaping --------
    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def vjp(g: np.ndarray) -> Tuple[np.ndarray]:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor(self.data.sum(axis=axis, keepdims=keepdims), "sum", (self,), vjp)

    def mean(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape: int) -> "Tensor":
        original = self.shape
        return Tensor(
            self.data.reshape(*shape),
            "reshape",
            (self,),
            lambda g: (g.reshape(original),),
        )


def lift(value: ArrayLike) -> Tensor:
    """Wrap a constant as a graph leaf; tensors pass through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, op="const")


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def _topological_order(output: Tensor) -> List[Tensor]:
    """Post-order of every node reachable from ``output`` (iterative DFS)."""
    order: List[Tensor] = []
    visited: set = set()
    stack: List[Tuple[Tensor, bool]] = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def gradients(
    output: Tensor,
    wrt: Sequence[Tensor],
    seed: Optional[np.ndarray] = None,
) -> List[np.ndarray]:
    """Reverse-mode adjoints of ``output`` with respect to each tensor in ``wrt``.

    ``output`` is usually a scalar; for non-scalar outputs pass ``seed`` (the
    upstream adjoint). Tensors that are reachable but receive no adjoint get
    zeros. A tensor that is not part of the graph at all raises GraphError.
    """
    order = _topological_order(output)
    reachable = {id(node) for node in order}
    for target in wrt:
        if id(target) not in reachable:
            raise GraphError(f"tensor {target!r} does not participate in the graph of {output!r}")

    adjoints: Dict[int, np.ndarray] = {
        id(output): np.ones(output.shape) if seed is None else np.asarray(seed, dtype=np.float64)
    }
    for node in reversed(order):
        grad = adjoints.get(id(node))
        if grad is None or node._vjp is None:
            continue
        for parent, parent_grad in zip(node.parents, node._vjp(grad)):
            if parent_grad is None:
                continue
            key = id(parent)
            if key in adjoints:
                adjoints[key] = adjoints[key] + parent_grad
            else:
                adjoints[key] = parent_grad

    result = []
    for target in wrt:
        grad = adjoints.get(id(target))
        grad = np.zeros(target.shape) if grad is None else np.asarray(grad, dtype=np.float64).reshape(target.shape)
        if not np.isfinite(grad).all():
            raise NonFiniteError(f"non-finite gradient for {target!r}")
        result.append(grad)
    return result


def input_gradient(model_loss: Tensor, image: Tensor) -> np.ndarray:
    """d(model_loss)/d(image), same shape as ``image``."""
    return gradients(model_loss, [image])[0]
