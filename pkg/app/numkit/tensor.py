"""
Dense float64 tensors with reverse-mode automatic differentiation.

Each primitive computes its forward value with numpy and registers a backward
rule mapping the upstream gradient to one gradient per input. Calling
``backward()`` on a scalar walks the graph in reverse topological order and
accumulates gradients additively into every leaf that requires them.
"""
import threading
from contextlib import contextmanager
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.errors import NonFiniteError, ShapeMismatchError

LOG_FLOOR = 1e-12

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Build no graph inside the block (inference, finite differences)."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Tensor:
    """A float64 array plus the bookkeeping reverse mode needs."""

    __array_ufunc__ = None  # ndarray op Tensor dispatches to the Tensor's reflected operator

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data: np.ndarray = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.op = "leaf"
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None

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
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatchError("item", self.shape, (1,), "tensor has more than one element")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label}, requires_grad={self.requires_grad})"

    # graph traversal
    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in reversed(node._parents):
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Accumulate d(self)/d(leaf) into every leaf's ``grad``."""
        if not self.requires_grad:
            return
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatchError("backward", self.shape, (), "implicit gradient needs a scalar")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.shape:
                raise ShapeMismatchError("backward", self.shape, grad.shape)

        pending = {id(self): grad}
        for node in reversed(self._topological_order()):
            upstream = pending.pop(id(node), None)
            if upstream is None:
                continue
            if node._backward is None:
                node.grad = upstream.copy() if node.grad is None else node.grad + upstream
                continue
            for parent, parent_grad in zip(node._parents, node._backward(upstream)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = parent_grad if key not in pending else pending[key] + parent_grad

    # operator sugar
    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        return div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return div(other, self)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, other)

    def __rmatmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(other, self)

    def __getitem__(self, index) -> "Tensor":
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def relu(self) -> "Tensor":
        return relu(self)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)

    def softplus(self) -> "Tensor":
        return softplus(self)

    def softmax(self, axis: int = -1) -> "Tensor":
        return softmax(self, axis=axis)


def as_tensor(value: ArrayLike) -> Tensor:
    """Wrap arrays and scalars as constant tensors; tensors pass through."""
    return value if isinstance(value, Tensor) else Tensor(value)


def tensor(data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def zeros(shape: Sequence[int], requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(tuple(shape)), requires_grad=requires_grad)


def ones(shape: Sequence[int], requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(tuple(shape)), requires_grad=requires_grad)


def _result(op: str, data: np.ndarray, parents: Tuple[Tensor, ...], backward: BackwardFn) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(op)
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(data, dtype=np.float64)
    out.grad = None
    out.name = None
    out.op = op
    out.requires_grad = False
    out._parents = ()
    out._backward = None
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_check(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(op, a.shape, b.shape) from None


def _normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = axis if isinstance(axis, (tuple, list)) else (axis,)
    return tuple(sorted(a % ndim for a in axes))


# elementwise binary
def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)
    return _result("add", a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", a, b)
    return _result("sub", a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", a, b)
    return _result("mul", a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("div", a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _result("div", out, (a, b), backward)


def neg(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _result("neg", -a.data, (a,), lambda g: (-g,))


# linear algebra and layout
def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Batched matrix product; both operands need at least two dimensions."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeMismatchError("matmul", a.shape, b.shape, "batch dimensions") from None

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        grad_a = np.matmul(g, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return _result("matmul", np.matmul(a.data, b.data), (a, b), backward)


def concat(tensors: Sequence[ArrayLike], axis: int = -1) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ShapeMismatchError("concat", (), (), "nothing to concatenate")
    ndim = parts[0].ndim
    axis = axis % ndim
    for part in parts[1:]:
        other = tuple(d for i, d in enumerate(part.shape) if i != axis)
        first = tuple(d for i, d in enumerate(parts[0].shape) if i != axis)
        if part.ndim != ndim or other != first:
            raise ShapeMismatchError("concat", parts[0].shape, part.shape)
    splits = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def backward(g: np.ndarray) -> Tuple[np.ndarray, ...]:
        return tuple(np.split(g, splits, axis=axis))

    return _result("concat", np.concatenate([p.data for p in parts], axis=axis), tuple(parts), backward)


def reshape(a: ArrayLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeMismatchError("reshape", a.shape, tuple(shape)) from None
    return _result("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: ArrayLike, axes: Optional[Sequence[int]] = None) -> Tensor:
    a = as_tensor(a)
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    if sorted(ax % a.ndim for ax in axes) != list(range(a.ndim)):
        raise ShapeMismatchError("transpose", a.shape, axes)
    inverse = tuple(np.argsort(axes))
    return _result("transpose", np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),))


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis for p in parts)


def getitem(a: ArrayLike, index) -> Tensor:
    a = as_tensor(a)
    basic = _is_basic_index(index)

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        grad = np.zeros_like(a.data)
        if basic:
            grad[index] += g
        else:
            # repeated indices must accumulate
            np.add.at(grad, index, g)
        return (grad,)

    return _result("getitem", a.data[index], (a,), backward)


# elementwise unary
def relu(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _result("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _result("exp", out, (a,), lambda g: (g * out,))


def log(a: ArrayLike) -> Tensor:
    """Natural log with inputs clamped to at least LOG_FLOOR."""
    a = as_tensor(a)
    clamped = np.maximum(a.data, LOG_FLOOR)
    active = a.data > LOG_FLOOR
    return _result("log", np.log(clamped), (a,), lambda g: (np.where(active, g / clamped, 0.0),))


def softplus(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    sigmoid = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _result("softplus", np.logaddexp(0.0, a.data), (a,), lambda g: (g * sigmoid,))


# reductions
def reduce_sum(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim) if a.ndim else ()

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        if not keepdims and axes:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result("sum", a.data.sum(axis=axes, keepdims=keepdims), (a,), backward)


def reduce_mean(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim) if a.ndim else ()
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    if count == 0:
        raise ShapeMismatchError("mean", a.shape, (), "mean over an empty axis")
    return reduce_sum(a, axis=axes, keepdims=keepdims) * (1.0 / count)


def softmax(a: ArrayLike, axis: int = -1) -> Tensor:
    """Softmax along ``axis``; output is strictly positive and sums to one."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result("softmax", out, (a,), backward)


def logsumexp(a: ArrayLike, axis: int = -1, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    peak = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - peak)
    total = e.sum(axis=axis, keepdims=True)
    out = peak + np.log(total)
    weights = e / total

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * weights,)

    return _result("logsumexp", out if keepdims else np.squeeze(out, axis=axis), (a,), backward)
