"""Surrounding-turn mask and the masked self-attention block over it.

Dialogue tokens attend to every token of the turns within ``c`` turns of
their own; every other token ([CLS], [SEP], argument tokens, padding)
attends only to itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import ModelConfig
from .encoding import InputSequence
from .layers import add_attention, add_layer_norm, layer_norm, multi_head_attention
from .numerics import MASK_NEG, ModelParams, ParamBuilder, Tensor
from .numerics import tensor as T


@dataclass(frozen=True)
class SurroundMask:
    allowed: np.ndarray
    window: int

    @property
    def shape(self) -> tuple:
        return self.allowed.shape

    def additive(self) -> np.ndarray:
        """0 on allowed entries, ``MASK_NEG`` elsewhere."""
        return np.where(self.allowed, 0.0, MASK_NEG)

    def padded(self, n: int) -> np.ndarray:
        """Allowed matrix grown to n x n; padding rows keep only their diagonal."""
        k = self.allowed.shape[0]
        out = np.eye(n, dtype=bool)
        out[:k, :k] = self.allowed
        return out


def surround_allowed(turn_of: np.ndarray, c: int) -> np.ndarray:
    """Allowed matrix from per-token turn numbers (0 marks non-dialogue tokens)."""
    if c < 0:
        raise ValueError("window size must be non-negative")
    in_dialogue = turn_of > 0
    near = np.abs(turn_of[:, None] - turn_of[None, :]) <= c
    allowed = in_dialogue[:, None] & in_dialogue[None, :] & near
    np.fill_diagonal(allowed, True)
    return allowed


def build_surround_mask(inp: InputSequence, c: int) -> SurroundMask:
    return SurroundMask(surround_allowed(inp.turn_of_token(), c), c)


def add_turn_attention_params(b: ParamBuilder, cfg: ModelConfig) -> None:
    add_attention(b, "turn_attn", cfg.d_model)
    add_layer_norm(b, "turn_attn.ln", cfg.d_model)


def turn_attend(
    x: Tensor,
    allowed,
    params: ModelParams,
    cfg: ModelConfig,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
    weights_out: Optional[list] = None,
) -> Tensor:
    """One masked multi-head attention block with residual and layer norm.

    ``x`` is (N, d) with a :class:`SurroundMask`, or (B, N, d) with a
    boolean (B, N, N) allowed array.
    """
    if isinstance(allowed, SurroundMask):
        allowed = allowed.allowed
    squeeze = x.ndim == 2
    xb = x.reshape(1, *x.shape) if squeeze else x
    mask = np.asarray(allowed, dtype=bool)
    if mask.ndim == 2:
        mask = mask[None]
    a = multi_head_attention(
        xb, mask, params, "turn_attn", cfg.turn_heads, dropout=cfg.attention_dropout, train=train, rng=rng, weights_out=weights_out
    )
    a = T.dropout(a, cfg.attention_dropout, rng, train)
    out = layer_norm(xb + a, params, "turn_attn.ln")
    return out.reshape(x.shape) if squeeze else out
