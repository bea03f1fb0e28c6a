"""Named parameter registry shared by models, optimizers and checkpoints."""

from __future__ import annotations

import math
from typing import Dict, Iterator, Tuple

import numpy as np

from ..errors import ConfigError
from .tensor import Tensor


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int,
                   dtype=np.float32) -> np.ndarray:
    """Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out))."""
    if fan_in <= 0 or fan_out <= 0:
        raise ConfigError(f"fans must be positive, got {fan_in}, {fan_out}")
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape).astype(dtype)


class ParamStore:
    """Ordered mapping name -> trainable Tensor.

    Iteration order is sorted by name everywhere (updates, checkpoints,
    gradient checks), which keeps runs reproducible and files canonical.
    """

    def __init__(self) -> None:
        self._params: Dict[str, Tensor] = {}

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name: {name!r}")
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise ConfigError(f"unknown parameter: {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return sorted(self._params)

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        for name in sorted(self._params):
            yield name, self._params[name]

    def zero_grad(self) -> None:
        for _, t in self.items():
            t.zero_grad()

    def n_params(self) -> int:
        return sum(t.size for _, t in self.items())

    def astype(self, dtype) -> None:
        """Cast all parameters in place (float64 for gradient checking)."""
        for _, t in self.items():
            t.data = np.ascontiguousarray(t.data.astype(dtype))
            t.grad = None

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data for name, t in self.items()}

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(arrays)
        extra = set(arrays) - set(self._params)
        if missing or extra:
            raise ConfigError(
                f"parameter set mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}"
            )
        for name, t in self.items():
            arr = arrays[name]
            if tuple(arr.shape) != t.shape:
                raise ConfigError(
                    f"shape mismatch for {name!r}: stored {tuple(arr.shape)}, model {t.shape}"
                )
            t.data = np.ascontiguousarray(arr.astype(t.data.dtype))
            t.grad = None
