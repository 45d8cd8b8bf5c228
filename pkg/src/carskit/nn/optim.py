from __future__ import annotations

from typing import Mapping

import numpy as np

from ..errors import NumericError
from .tensor import Tensor


class Adam:
    """Adam with bias correction over a fixed name -> parameter mapping.

    Gradients are cleared after every step.
    """

    def __init__(self, params: Mapping[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        ids = [id(p) for p in params.values()]
        if len(set(ids)) != len(ids):
            raise ValueError("a parameter appears more than once in the optimizer")
        self.params = dict(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.step_count = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        for name, p in self.params.items():
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                self.zero_grad()
                raise NumericError(f"non-finite gradient in parameter {name!r}; step aborted")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else 0.0
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        self.zero_grad()

    def state(self) -> dict:
        return {"step": self.step_count, "m": self.m, "v": self.v}
