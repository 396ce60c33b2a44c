"""Building blocks shared by the encoder and the turn-attention module."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .numerics import ModelParams, ParamBuilder, Tensor
from .numerics import tensor as T


def add_linear(b: ParamBuilder, prefix: str, d_in: int, d_out: int) -> None:
    b.weight(f"{prefix}.w", (d_in, d_out))
    b.bias(f"{prefix}.b", d_out)


def linear(x: Tensor, params: ModelParams, prefix: str) -> Tensor:
    # weights are stored (in, out)
    return x @ params[f"{prefix}.w"] + params[f"{prefix}.b"]


def add_layer_norm(b: ParamBuilder, prefix: str, d: int) -> None:
    b.ones(f"{prefix}.g", d)
    b.bias(f"{prefix}.b", d)


def layer_norm(x: Tensor, params: ModelParams, prefix: str, eps: float = 1e-5) -> Tensor:
    return T.normalize(x, eps) * params[f"{prefix}.g"] + params[f"{prefix}.b"]


def add_attention(b: ParamBuilder, prefix: str, d: int) -> None:
    for proj in ("q", "k", "v", "o"):
        add_linear(b, f"{prefix}.{proj}", d, d)


def multi_head_attention(
    x: Tensor,
    allowed: np.ndarray,
    params: ModelParams,
    prefix: str,
    heads: int,
    *,
    dropout: float = 0.0,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
    weights_out: Optional[list] = None,
) -> Tensor:
    """Scaled dot-product attention over ``x`` of shape (B, N, d).

    ``allowed`` is a boolean (B, N, N) or (N, N) matrix; row m lists the
    positions token m may attend to.  If ``weights_out`` is a list, the
    (B, heads, N, N) attention weights are appended to it.
    """
    B, N, d = x.shape
    if d % heads:
        raise ValueError(f"model dimension {d} is not divisible by {heads} heads")
    dh = d // heads

    def split(t: Tensor) -> Tensor:
        return T.transpose(t.reshape(B, N, heads, dh), (0, 2, 1, 3))

    q = split(linear(x, params, f"{prefix}.q"))
    k = split(linear(x, params, f"{prefix}.k"))
    v = split(linear(x, params, f"{prefix}.v"))
    scores = (q @ T.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(dh))
    mask = np.asarray(allowed, dtype=bool)
    if mask.ndim == 3:
        mask = mask[:, None, :, :]
    attn = T.masked_softmax(scores, mask)
    if weights_out is not None:
        weights_out.append(attn.data)
    attn = T.dropout(attn, dropout, rng, train)
    ctx = T.transpose(attn @ v, (0, 2, 1, 3)).reshape(B, N, d)
    return linear(ctx, params, f"{prefix}.o")
