"""Adam with a staircase exponential learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch


@dataclass(frozen=True)
class LRSchedule:
    initial: float = 1e-3
    decay: float = 0.7
    interval: int = 200_000
    floor: float = 1e-5

    def __call__(self, step: int) -> float:
        return max(self.floor, self.initial * self.decay ** (step // self.interval))


class Adam:
    """Bias-corrected Adam over a dict of named parameter tensors."""

    def __init__(self, params: dict, schedule: LRSchedule | None = None,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.schedule = schedule or LRSchedule()
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros(p.shape, dtype=np.float64) for k, p in params.items()}
        self.v = {k: np.zeros(p.shape, dtype=np.float64) for k, p in params.items()}

    @property
    def lr(self) -> float:
        return self.schedule(self.step_count)

    def step(self, grads: dict) -> None:
        lr = self.lr
        t = self.step_count + 1
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for k, p in self.params.items():
            g = grads.get(k)
            if g is None:
                continue
            g = np.asarray(g, dtype=np.float64)
            if g.shape != p.shape:
                raise ShapeMismatch(f"gradient for {k} has shape {g.shape}, parameter {p.shape}")
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = (p.data - update).astype(p.dtype)
        self.step_count = t
