"""Named parameter collections with explicit gradient buffers."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError


class Param:
    """One trainable array plus its gradient accumulator."""

    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)


class ParamSet:
    """Ordered name -> Param mapping.

    Different sets may share the same Param objects (see :meth:`union`);
    an optimizer step through one set is then visible through the other.
    """

    def __init__(self):
        self._params: dict[str, Param] = {}

    def add(self, name: str, value: np.ndarray) -> Param:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name: {name!r}")
        p = Param(value)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad[...] = 0.0

    def total_size(self) -> int:
        return sum(p.value.size for p in self._params.values())

    def clone(self) -> "ParamSet":
        """Deep copy of values; fresh zero gradients."""
        out = ParamSet()
        for name, p in self._params.items():
            out.add(name, p.value.copy())
        return out

    def copy_values_from(self, other: "ParamSet") -> None:
        if self.names() != other.names():
            raise ConfigError("parameter sets do not match by name")
        for name, p in self._params.items():
            src = other[name].value
            if src.shape != p.value.shape:
                raise ConfigError(f"shape mismatch for parameter {name!r}")
            p.value = src.copy()

    @staticmethod
    def union(*sets: "ParamSet") -> "ParamSet":
        """A view over several sets sharing the underlying Param objects."""
        out = ParamSet()
        for s in sets:
            for name, p in s.items():
                if name in out._params:
                    raise ConfigError(f"duplicate parameter name in union: {name!r}")
                out._params[name] = p
        return out
