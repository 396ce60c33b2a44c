"""Named parameter collections and initialisation."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .tensor import Tensor


class ModelParams(dict):
    """Ordered mapping of parameter name to trainable :class:`Tensor`."""

    def add(self, name: str, values: np.ndarray) -> Tensor:
        if name in self:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(values, requires_grad=True, name=name)
        self[name] = t
        return t

    def zero_grad(self) -> None:
        for t in self.values():
            t.grad = None

    def num_scalars(self) -> int:
        return sum(t.size for t in self.values())

    def clone(self) -> "ModelParams":
        out = ModelParams()
        for name, t in self.items():
            out.add(name, t.data.copy())
        return out

    def assign(self, other: "ModelParams") -> None:
        """Copy values from ``other`` in place (names and shapes must match)."""
        if list(other) != list(self):
            raise ValueError("parameter names differ")
        for name, t in self.items():
            src = other[name].data
            if src.shape != t.shape:
                raise ValueError(f"shape mismatch for {name}: {src.shape} vs {t.shape}")
            t.data = src.copy()

    def state(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.items()}

    def families(self) -> dict[str, list[str]]:
        """Group parameter names by their leading dotted component."""
        groups: dict[str, list[str]] = {}
        for name in self:
            groups.setdefault(name.split(".")[0], []).append(name)
        return groups


def xavier_uniform(shape: Iterable[int], rng: np.random.Generator, fan_in: int = None, fan_out: int = None) -> np.ndarray:
    shape = tuple(int(s) for s in shape)
    if not shape or any(s <= 0 for s in shape):
        raise ValueError(f"invalid parameter shape {shape}")
    if fan_in is None:
        fan_in = shape[0] if len(shape) > 1 else shape[0]
    if fan_out is None:
        fan_out = shape[-1]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class ParamBuilder:
    """Helper that registers fan-scaled weights and zero biases on a ``ModelParams``."""

    def __init__(self, params: ModelParams, rng: np.random.Generator):
        self.params = params
        self.rng = rng

    def weight(self, name: str, shape, fan_in: int = None, fan_out: int = None) -> Tensor:
        return self.params.add(name, xavier_uniform(shape, self.rng, fan_in, fan_out))

    def bias(self, name: str, size: int) -> Tensor:
        if size <= 0:
            raise ValueError(f"invalid bias size {size}")
        return self.params.add(name, np.zeros(size))

    def ones(self, name: str, size: int) -> Tensor:
        if size <= 0:
            raise ValueError(f"invalid gain size {size}")
        return self.params.add(name, np.ones(size))
