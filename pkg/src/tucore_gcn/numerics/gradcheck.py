"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .params import ModelParams
from .tensor import GradTape, Tensor


class NonDeterministicLoss(RuntimeError):
    pass


@dataclass
class GradEntry:
    name: str
    index: int
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradReport:
    entries: list[GradEntry] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((e.rel_error for e in self.entries), default=0.0)

    def worst(self, k: int = 5) -> list[GradEntry]:
        return sorted(self.entries, key=lambda e: -e.rel_error)[:k]

    def by_family(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for e in self.entries:
            fam = e.name.split(".")[0]
            out[fam] = max(out.get(fam, 0.0), e.rel_error)
        return out

    def __len__(self) -> int:
        return len(self.entries)


def relative_error(a: float, b: float, floor: float = 0.0) -> float:
    denom = max(abs(a), abs(b), floor)
    if denom == 0.0:
        return 0.0
    return abs(a - b) / denom


def _scalar(t: Tensor) -> float:
    if t.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {t.shape}")
    return float(t.data.reshape(()))


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: ModelParams,
    samples: int,
    eps: float = 1e-5,
    seed: int = 0,
    names: list[str] | None = None,
    floor: float = 0.0,
) -> GradReport:
    """Compare tape gradients with central differences on sampled scalars.

    Samples are spread round-robin over the parameter tensors (``names``
    restricts the pool), with a random flat index inside each tensor.
    ``floor`` bounds the relative-error denominator from below.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    report = GradReport()
    if samples <= 0:
        return report

    params.zero_grad()
    with GradTape() as tape:
        loss = loss_fn()
    base = _scalar(loss)
    tape.backward(loss)
    if _scalar(loss_fn()) != base:
        raise NonDeterministicLoss("two forward passes disagree; disable dropout and fix seeds")

    pool = list(names) if names is not None else list(params)
    rng = np.random.default_rng(seed)
    for i in range(samples):
        name = pool[i % len(pool)]
        t = params[name]
        j = int(rng.integers(t.size))
        flat = t.data.flat
        grad = t.grad.flat[j] if t.grad is not None else 0.0
        orig = float(flat[j])
        flat[j] = orig + eps
        f_plus = _scalar(loss_fn())
        flat[j] = orig - eps
        f_minus = _scalar(loss_fn())
        flat[j] = orig
        numeric = (f_plus - f_minus) / (2 * eps)
        report.entries.append(GradEntry(name, j, float(grad), numeric, relative_error(float(grad), numeric, floor)))
    return report
