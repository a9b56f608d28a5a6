"""AdamW with decoupled weight decay over a parameter registry.

Optimizer state exists only for trainable entries; a gradient appearing on a
frozen parameter is a freeze violation and aborts the step.
"""

from __future__ import annotations

import numpy as np

from .params import ParamRegistry


class FreezeViolationError(RuntimeError):
    pass


class AdamW:
    def __init__(self, registry: ParamRegistry, lr: float = 5e-4,
                 weight_decay: float = 0.01, betas: tuple = (0.9, 0.999),
                 eps: float = 1e-8):
        self.registry = registry
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self._moments: dict[str, tuple[np.ndarray, np.ndarray]] = {
            name: (np.zeros_like(p.data), np.zeros_like(p.data))
            for name, p in registry.trainable()
        }

    def step(self) -> None:
        for name, p in self.registry.frozen():
            if p.grad is not None:
                raise FreezeViolationError(
                    f"gradient present on frozen parameter '{name}'")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.registry.trainable():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m, v = self._moments[name]
            if self.weight_decay:
                p.data *= 1.0 - self.lr * self.weight_decay
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self) -> None:
        self.registry.zero_grad()
