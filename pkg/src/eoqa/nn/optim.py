"""SGD with classic momentum and coupled weight decay."""

from __future__ import annotations

import numpy as np

from ..errors import TrainingDiverged
from .layers import Param


class SGD:
    """v <- momentum v + grad + wd param;  param <- param - lr v."""

    def __init__(self, params: list[Param], lr: float, momentum: float = 0.9,
                 weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad[...] = 0.0

    def step(self) -> None:
        for i, p in enumerate(self.params):
            g = p.grad + self.weight_decay * p.value
            if not np.isfinite(g).all():
                raise TrainingDiverged(
                    f"non-finite gradient in parameter {i} "
                    f"(shape {p.value.shape}, |g|max={np.abs(p.grad).max()})")
            v = self.velocity[i]
            v *= self.momentum
            v += g
            p.value -= self.lr * v
