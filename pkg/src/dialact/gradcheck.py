"""Finite-difference oracle for analytic gradients.

The check never trusts the graph: it re-evaluates the loss twice per
parameter entry with central differences and compares against whatever
backward() produced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericError
from .params import ParamStore
from .tensor import Tensor, no_grad

DEFAULT_STEP = 1e-5


@dataclass
class GradCheckReport:
    """Per-parameter relative errors between analytic and FD gradients."""

    entries: dict[str, float] = field(default_factory=dict)

    @property
    def max_rel_err(self) -> float:
        return max(self.entries.values(), default=0.0)

    def worst(self) -> tuple[str, float] | None:
        if not self.entries:
            return None
        name = max(self.entries, key=self.entries.get)
        return name, self.entries[name]


def grad_check(loss_fn: Callable[[], Tensor], params: ParamStore,
               step: float = DEFAULT_STEP) -> GradCheckReport:
    """Compare backward() gradients of `loss_fn` against central differences.

    `loss_fn` must be a pure function of the current parameter values and
    return a scalar tensor. Relative error per entry is
    |ga - gfd| / (|ga| + |gfd| + 1e-12), and the report keeps the max per
    parameter.
    """
    params.zero_grad()
    loss = loss_fn()
    value = loss.item()
    if not math.isfinite(value):
        raise NumericError(f"loss is not finite: {value}")
    loss.backward()
    analytic = {name: p.grad.copy() for name, p in params.items()}

    report = GradCheckReport()
    with no_grad():
        for name, p in params.items():
            flat = p.value.reshape(-1)
            fd = np.zeros_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up = loss_fn().item()
                flat[i] = orig - step
                down = loss_fn().item()
                flat[i] = orig
                if not (math.isfinite(up) and math.isfinite(down)):
                    raise NumericError(f"perturbed loss not finite at '{name}'[{i}]")
                fd[i] = (up - down) / (2.0 * step)
            ga = analytic[name].reshape(-1)
            rel = np.abs(ga - fd) / (np.abs(ga) + np.abs(fd) + 1e-12)
            report.entries[name] = float(rel.max()) if rel.size else 0.0
    return report
