"""Candidate edge operations: width-preserving toy analogs of the conv-cell choices.

Mapping used by :func:`default_opset` (seven candidates):

============== ===================================
name           stands in for
============== ===================================
identity       skip connection
relu_dense     3x3 separable conv (ReLU -> linear)
relu_dense_x2  5x5 separable conv, applied twice
tanh_dense     3x3 dilated conv
dense          5x5 dilated conv
max_mix        3x3 max pooling
mean_mix       3x3 average pooling
============== ===================================

``zero`` is available through ``default_opset(d, include_zero=True)`` or by
name in :func:`make_opset`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as tn
from .tensor import ShapeError, Tensor


class OpInstance:
    """A built operation: its own parameters plus a call counter."""

    def __init__(self, name: str, fn: Callable, params: list[Tensor], width: int):
        self.name = name
        self._fn = fn
        self.params = params
        self.width = width
        self.calls = 0

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2 or x.shape[1] != self.width:
            raise ShapeError(f"{self.name}: expected width {self.width}, got shape {x.shape}")
        self.calls += 1
        return self._fn(x)

    def __repr__(self) -> str:
        return f"OpInstance({self.name!r}, width={self.width})"


@dataclass(frozen=True)
class OpDescriptor:
    name: str
    parameterized: bool
    builder: Callable[[int, np.random.Generator], OpInstance] = field(repr=False)
    n_layers: int = 0

    def param_count(self, d: int) -> int:
        return self.n_layers * (d * d + d)

    def build(self, d: int, rng: np.random.Generator) -> OpInstance:
        return self.builder(d, rng)


def _dense_params(d: int, rng: np.random.Generator, tag: str) -> tuple[Tensor, Tensor]:
    w = tn.parameter((d, d), d, rng, name=f"{tag}.w")
    b = tn.parameter((d,), d, rng, name=f"{tag}.b")
    return w, b


def _permutation(d: int) -> np.ndarray:
    return np.roll(np.arange(d), 1)


def _identity(d, rng):
    return OpInstance("identity", lambda x: x, [], d)


def _zero(d, rng):
    return OpInstance("zero", lambda x: tn.scale(x, 0.0), [], d)


def _dense(d, rng):
    w, b = _dense_params(d, rng, "dense")
    return OpInstance("dense", lambda x: x @ w + b, [w, b], d)


def _relu_dense(d, rng):
    w, b = _dense_params(d, rng, "relu_dense")
    return OpInstance("relu_dense", lambda x: tn.relu(x) @ w + b, [w, b], d)


def _tanh_dense(d, rng):
    w, b = _dense_params(d, rng, "tanh_dense")
    return OpInstance("tanh_dense", lambda x: tn.tanh(x) @ w + b, [w, b], d)


def _relu_dense_x2(d, rng):
    w1, b1 = _dense_params(d, rng, "relu_dense_x2.0")
    w2, b2 = _dense_params(d, rng, "relu_dense_x2.1")

    def fn(x):
        h = tn.relu(x) @ w1 + b1
        return tn.relu(h) @ w2 + b2

    return OpInstance("relu_dense_x2", fn, [w1, b1, w2, b2], d)


def _max_mix(d, rng):
    perm = _permutation(d)
    return OpInstance("max_mix", lambda x: tn.maximum(x, tn.take(x, perm, axis=1)), [], d)


def _mean_mix(d, rng):
    perm = _permutation(d)
    return OpInstance("mean_mix",
                      lambda x: tn.scale(x + tn.take(x, perm, axis=1), 0.5), [], d)


REGISTRY: dict[str, OpDescriptor] = {
    op.name: op
    for op in [
        OpDescriptor("identity", False, _identity),
        OpDescriptor("zero", False, _zero),
        OpDescriptor("dense", True, _dense, 1),
        OpDescriptor("relu_dense", True, _relu_dense, 1),
        OpDescriptor("tanh_dense", True, _tanh_dense, 1),
        OpDescriptor("relu_dense_x2", True, _relu_dense_x2, 2),
        OpDescriptor("max_mix", False, _max_mix),
        OpDescriptor("mean_mix", False, _mean_mix),
    ]
}

DEFAULT_NAMES = ("identity", "relu_dense", "relu_dense_x2", "tanh_dense", "dense",
                 "max_mix", "mean_mix")


class OpSet:
    """Ordered, uniquely named collection of candidate operations."""

    def __init__(self, ops: Sequence[OpDescriptor], width: int):
        names = [op.name for op in ops]
        if len(ops) < 2:
            raise ValueError(f"an op set needs at least 2 operations, got {names}")
        if len(set(names)) != len(names):
            raise ValueError(f"operation names must be unique, got {names}")
        if width < 1:
            raise ValueError(f"width must be >= 1, got {width}")
        self.ops = tuple(ops)
        self.width = width

    @property
    def N(self) -> int:
        return len(self.ops)

    def __len__(self) -> int:
        return len(self.ops)

    def __getitem__(self, i: int) -> OpDescriptor:
        return self.ops[i]

    def __iter__(self):
        return iter(self.ops)

    @property
    def names(self) -> list[str]:
        return [op.name for op in self.ops]

    def index(self, name: str) -> int:
        return self.names.index(name)


def make_opset(names: Sequence[str], d: int) -> OpSet:
    unknown = [n for n in names if n not in REGISTRY]
    if unknown:
        raise KeyError(f"unknown operation(s) {unknown}; known: {sorted(REGISTRY)}")
    return OpSet([REGISTRY[n] for n in names], d)


def default_opset(d: int, include_zero: bool = False) -> OpSet:
    if d < 1:
        raise ValueError(f"width must be >= 1, got {d}")
    names = DEFAULT_NAMES + (("zero",) if include_zero else ())
    return make_opset(names, d)


def apply(op: OpDescriptor | OpInstance, x: Tensor, rng: np.random.Generator | None = None) -> Tensor:
    """Apply an operation to ``x``.  A bare descriptor is built on the fly."""
    if isinstance(op, OpDescriptor):
        op = op.build(x.shape[-1], rng if rng is not None else np.random.default_rng(0))
    return op(x)
