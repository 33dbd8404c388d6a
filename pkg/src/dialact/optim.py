"""Adam with decoupled weight decay."""

from __future__ import annotations

import numpy as np

from .errors import NumericError
from .params import ParamStore


class AdamW:
    """Per-parameter Adam moments; decay is applied to the value before the
    Adam delta, never folded into the gradient."""

    def __init__(self, params: ParamStore, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self._t = 0
        self._m = {name: np.zeros_like(t.value) for name, t in params.items()}
        self._v = {name: np.zeros_like(t.value) for name, t in params.items()}

    def step(self) -> None:
        self._t += 1
        bc1 = 1.0 - self.beta1 ** self._t
        bc2 = 1.0 - self.beta2 ** self._t
        for name, p in self.params.items():
            g = p.grad
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite gradient for parameter '{name}'")
            if self.weight_decay:
                p.value -= self.lr * self.weight_decay * p.value
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.value -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if not np.isfinite(p.value).all():
                raise NumericError(f"non-finite value for parameter '{name}' after update")


def adam_step(params: ParamStore, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8, weight_decay: float = 0.0) -> AdamW:
    """One optimizer step with fresh moments; returns the optimizer so a
    caller can keep stepping with state intact."""
    opt = AdamW(params, lr, beta1, beta2, eps, weight_decay)
    opt.step()
    return opt
