"""Dense float64 tensors with a dynamic reverse-mode tape.

Every primitive returns a new :class:`Tensor` that remembers its inputs and a
closure computing the vector-Jacobian product.  Tensors receive a strictly
increasing sequence number on creation, so sorting the nodes reachable from a
loss by that number yields a topological order; :func:`backward` walks it in
reverse.  The graph is rebuilt on every forward pass, which is what lets a cell
drop pruned operations without any recompilation.

A graph can be differentiated once.  Calling :func:`backward` a second time on
the same loss raises :class:`GraphConsumedError`; run a new forward pass
instead.
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

_ids = itertools.count()


class ShapeError(ValueError):
    pass


class GraphConsumedError(RuntimeError):
    pass


class Tensor:
    """A float64 array plus the bookkeeping needed for backpropagation.

    ``requires_grad`` marks leaves whose gradient is wanted (parameters).
    Intermediate tensors inherit it from their inputs and also keep their
    ``grad`` after a backward pass, which is how the mixed-operation output
    exposes the upstream gradient used by the closed-form alpha gradient.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_id", "_parents",
                 "_backward", "_op", "_consumed")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._id = next(_ids)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._op = "leaf"
        self._consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self._op}{tag})"

    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        backward(self)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(shape: Sequence[int], fan_in: int, rng: np.random.Generator,
              name: str | None = None) -> Tensor:
    """Trainable leaf initialised uniformly in +-sqrt(1/fan_in)."""
    bound = np.sqrt(1.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=tuple(shape)), requires_grad=True,
                  name=name)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], op: str,
          backward_fn: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._id = next(_ids)
    out._op = op
    out._consumed = False
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# --------------------------------------------------------------------------
# primitives
# --------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("add", a, b)

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _node(a.data + b.data, (a, b), "add", bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("sub", a, b)

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _node(a.data - b.data, (a, b), "sub", bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("mul", a, b)

    def bw(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), "mul", bw)


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a non-differentiable constant."""
    c = float(c)

    def bw(g):
        _accumulate(a, g * c)

    return _node(a.data * c, (a,), "scale", bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def bw(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _node(a.data @ b.data, (a, b), "matmul", bw)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bw(g):
        _accumulate(a, g * mask)

    return _node(np.where(mask, a.data, 0.0), (a,), "relu", bw)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def bw(g):
        _accumulate(a, g * (1.0 - y * y))

    return _node(y, (a,), "tanh", bw)


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; ties send the gradient to ``a``."""
    if a.shape != b.shape:
        raise ShapeError(f"maximum: incompatible shapes {a.shape} and {b.shape}")
    pick_a = a.data >= b.data

    def bw(g):
        _accumulate(a, g * pick_a)
        _accumulate(b, g * ~pick_a)

    return _node(np.where(pick_a, a.data, b.data), (a, b), "maximum", bw)


def sum_(a: Tensor, axis: int | None = None) -> Tensor:
    def bw(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.shape))
        else:
            _accumulate(a, np.broadcast_to(np.expand_dims(g, axis), a.shape))

    return _node(np.asarray(a.data.sum(axis=axis)), (a,), "sum", bw)


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    n = a.size if axis is None else a.shape[axis]

    def bw(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g / n, a.shape))
        else:
            _accumulate(a, np.broadcast_to(np.expand_dims(g, axis) / n, a.shape))

    return _node(np.asarray(a.data.mean(axis=axis)), (a,), "mean", bw)


def _stable_softmax(x: np.ndarray, axis: int) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    y = _stable_softmax(a.data, axis)

    def bw(g):
        _accumulate(a, y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return _node(y, (a,), "softmax", bw)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    y = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def bw(g):
        _accumulate(a, g - np.exp(y) * g.sum(axis=axis, keepdims=True))

    return _node(y, (a,), "log_softmax", bw)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``logits``."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(
            f"cross_entropy: incompatible shapes {logits.shape} and {labels.shape}")
    n = logits.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def bw(g):
        d = np.exp(logp)
        d[rows, labels] -= 1.0
        _accumulate(logits, d * (g / n))

    return _node(np.asarray(loss), (logits,), "cross_entropy", bw)


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = tuple(parts)
    try:
        data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        shapes = " and ".join(str(p.shape) for p in parts)
        raise ShapeError(f"concat: incompatible shapes {shapes}") from None
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def bw(g):
        for p, gp in zip(parts, np.split(g, bounds, axis=axis)):
            _accumulate(p, gp)

    return _node(data, parts, "concat", bw)


def take(a: Tensor, index, axis: int = -1) -> Tensor:
    """Gather along ``axis``; an integer index drops the axis."""
    index = np.asarray(index)
    out = np.take(a.data, index, axis=axis)

    def bw(g):
        full = np.zeros_like(a.data)
        ax = axis % a.data.ndim
        if index.ndim == 0:
            sl = [slice(None)] * a.data.ndim
            sl[ax] = int(index)
            full[tuple(sl)] += g
        else:
            np.add.at(full, tuple([slice(None)] * ax + [index]), g)
        _accumulate(a, full)

    return _node(out, (a,), "take", bw)


# --------------------------------------------------------------------------
# graph traversal
# --------------------------------------------------------------------------


class Graph:
    """Nodes reachable from an output, in creation (= topological) order."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, out: Tensor) -> "Graph":
        seen: dict[int, Tensor] = {}
        stack = [out]
        while stack:
            t = stack.pop()
            if t._id in seen:
                continue
            seen[t._id] = t
            stack.extend(t._parents)
        return cls(sorted(seen.values(), key=lambda t: t._id))

    def __len__(self) -> int:
        return len(self.nodes)

    def primitives(self) -> list[Tensor]:
        return [t for t in self.nodes if not t.is_leaf]


def backward(loss: Tensor) -> int:
    """Accumulate d(loss)/d(leaf) into every ``requires_grad`` leaf.

    Returns the number of primitive nodes visited.
    """
    if loss.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if loss._consumed:
        raise GraphConsumedError("backward already ran on this graph; redo the forward pass")
    if not loss.requires_grad:
        loss._consumed = True
        return 0
    graph = Graph.from_output(loss)
    loss.grad = np.ones_like(loss.data)
    visited = 0
    for node in reversed(graph.nodes):
        if node._backward is None or node.grad is None:
            continue
        node._backward(node.grad)
        visited += 1
    for node in graph.nodes:
        if node._parents:
            node._backward = None
            node._parents = ()
    loss._consumed = True
    return visited


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
