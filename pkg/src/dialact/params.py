"""Named trainable parameters with their gradient buffers."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensor import Tensor


class ParamStore:
    """Ordered map from parameter path (e.g. "attn.W_s1") to a leaf Tensor.

    Iteration follows insertion order, which fixes the layout of optimizer
    state, gradient checks, and checkpoint payloads.
    """

    def __init__(self):
        self._entries: dict[str, Tensor] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._entries:
            raise ShapeError(f"parameter '{name}' registered twice")
        t = Tensor(value, requires_grad=True)
        self._entries[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def zero_grad(self) -> None:
        for t in self._entries.values():
            t.grad[...] = 0.0

    def scale_grads(self, c: float) -> None:
        for t in self._entries.values():
            t.grad *= c

    def total_parameters(self) -> int:
        return sum(t.value.size for t in self._entries.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.value.copy() for name, t in self._entries.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._entries) - set(state)
        extra = set(state) - set(self._entries)
        if missing or extra:
            raise ShapeError(f"state dict mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, t in self._entries.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.value.shape:
                raise ShapeError(f"parameter '{name}': stored shape {arr.shape} != {t.value.shape}")
            t.value[...] = arr
