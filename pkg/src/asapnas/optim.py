"""First-order optimizers whose state can follow parameters being removed."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .tensor import Tensor


class SGD:
    """SGD with heavy-ball momentum, state keyed by parameter identity."""

    def __init__(self, lr: float, momentum: float = 0.9, weight_decay: float = 0.0,
                 grad_clip: float | None = None):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.grad_clip = grad_clip
        self._velocity: dict[int, np.ndarray] = {}

    def step(self, params: Iterable[Tensor]) -> None:
        params = [p for p in params if p.grad is not None]
        if self.grad_clip is not None:
            norm = np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params))
            factor = min(1.0, self.grad_clip / (norm + 1e-12))
        else:
            factor = 1.0
        for p in params:
            g = p.grad * factor
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            v = self._velocity.get(id(p))
            v = g if v is None else self.momentum * v + g
            self._velocity[id(p)] = v
            p.data = p.data - self.lr * v

    def forget(self, params: Iterable[Tensor]) -> None:
        for p in params:
            self._velocity.pop(id(p), None)


class Adam:
    def __init__(self, lr: float = 1e-3, betas: tuple[float, float] = (0.5, 0.999),
                 eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self._state: dict[int, list] = {}

    def step(self, params: Iterable[Tensor]) -> None:
        b1, b2 = self.betas
        for p in params:
            if p.grad is None:
                continue
            st = self._state.get(id(p))
            if st is None:
                st = [0, np.zeros_like(p.data), np.zeros_like(p.data)]
                self._state[id(p)] = st
            st[0] += 1
            st[1] = b1 * st[1] + (1 - b1) * p.grad
            st[2] = b2 * st[2] + (1 - b2) * p.grad * p.grad
            mhat = st[1] / (1 - b1 ** st[0])
            vhat = st[2] / (1 - b2 ** st[0])
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def transfer(self, old: Tensor, new: Tensor, keep: np.ndarray) -> None:
        """Move state from ``old`` to ``new``, keeping only entries ``keep``."""
        st = self._state.pop(id(old), None)
        if st is not None:
            self._state[id(new)] = [st[0], st[1][keep].copy(), st[2][keep].copy()]
