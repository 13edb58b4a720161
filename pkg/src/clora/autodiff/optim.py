from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from .tensor import Tensor


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float
    momentum: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self):
        # zero is accepted as a no-op step (useful for freezing checks)
        if not self.learning_rate >= 0:
            raise ContractError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ContractError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ContractError(f"weight_decay must be non-negative, got {self.weight_decay}")


class SGD:
    """SGD with heavy-ball momentum and L2 weight decay.

    ``v <- momentum * v + (grad + wd * p)``, ``p <- p - lr * v``. The first
    step seeds ``v`` with the raw gradient. Gradients are zeroed after every
    step.
    """

    def __init__(self, params, cfg: SgdConfig):
        self.params = list(params)
        self.cfg = cfg
        self._velocity: dict[int, np.ndarray] = {}

    def step(self) -> None:
        cfg = self.cfg
        for p in self.params:
            if not p.requires_grad or p.grad is None:
                raise ContractError(f"parameter {p.name or p.shape} has no gradient buffer")
        for p in self.params:
            g = p.grad + cfg.weight_decay * p.data if cfg.weight_decay else p.grad
            if cfg.momentum:
                v = self._velocity.get(id(p))
                v = g.copy() if v is None else cfg.momentum * v + g
                self._velocity[id(p)] = v
                g = v
            if cfg.learning_rate:
                p.data -= cfg.learning_rate * g
            p.grad.fill(0.0)


def sgd_step(params, cfg: SgdConfig, optimizer: SGD | None = None) -> SGD:
    """One optimizer step over ``params``; pass the returned SGD back in to keep momentum."""
    opt = optimizer or SGD(params, cfg)
    opt.step()
    return opt


def zero_grad(params) -> None:
    for p in params:
        if isinstance(p, Tensor):
            p.zero_grad()
