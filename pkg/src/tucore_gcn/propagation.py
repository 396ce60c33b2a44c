"""Turn-level BiLSTM injection and edge-typed graph convolution.

Several graphs are processed together by stacking their nodes and using
block-diagonal adjacency matrices; a single graph is a batch of one.  Each
GCN layer ``l`` owns its own (optionally stacked) BiLSTM, a projection
``W_alpha`` from the 2d-dimensional BiLSTM state back to d, and one weight
and bias per edge type.  Aggregation follows the printed rule literally:
no self-loops, no degree normalisation, and the per-type bias is added once
per neighbour message.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .config import ModelConfig
from .graph import EDGE_TYPES, DialogueGraph
from .numerics import ModelParams, ParamBuilder, Tensor
from .numerics import tensor as T


@dataclass
class GraphBatch:
    graphs: list
    offsets: np.ndarray
    num_nodes: int
    adjacency: dict
    turn_index: np.ndarray
    lengths: np.ndarray
    reverse_index: np.ndarray
    valid_b: np.ndarray
    valid_t: np.ndarray
    inject_select: np.ndarray
    dialogue_nodes: np.ndarray
    subject_nodes: np.ndarray
    object_nodes: np.ndarray

    @classmethod
    def from_graphs(cls, graphs: Sequence[DialogueGraph]) -> "GraphBatch":
        graphs = list(graphs)
        sizes = np.array([g.num_nodes for g in graphs], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        total = int(sizes.sum())
        adjacency = {}
        for etype in EDGE_TYPES:
            a = np.zeros((total, total))
            for g, off in zip(graphs, offsets):
                for u, v in g.edges_of(etype):
                    a[off + u, off + v] += 1.0
                    a[off + v, off + u] += 1.0
            if a.any():
                adjacency[etype] = a
        lengths = np.array([g.num_turns for g in graphs], dtype=np.int64)
        B, m_max = len(graphs), int(lengths.max())
        turn_index = np.repeat(offsets[:, None], m_max, axis=1)
        reverse_index = np.tile(np.arange(m_max), (B, 1))
        for b, (g, off) in enumerate(zip(graphs, offsets)):
            turn_index[b, : g.num_turns] = off + 1 + np.arange(g.num_turns)
            reverse_index[b, : g.num_turns] = np.arange(g.num_turns)[::-1]
        valid_b = np.concatenate([np.full(g.num_turns, b) for b, g in enumerate(graphs)]).astype(np.int64)
        valid_t = np.concatenate([np.arange(g.num_turns) for g in graphs]).astype(np.int64)
        select = np.arange(total, dtype=np.int64)
        select[turn_index[valid_b, valid_t]] = total + np.arange(len(valid_b))
        return cls(
            graphs=graphs,
            offsets=offsets,
            num_nodes=total,
            adjacency=adjacency,
            turn_index=turn_index,
            lengths=lengths,
            reverse_index=reverse_index,
            valid_b=valid_b,
            valid_t=valid_t,
            inject_select=select,
            dialogue_nodes=offsets.copy(),
            subject_nodes=offsets + np.array([g.subject_node for g in graphs]),
            object_nodes=offsets + np.array([g.object_node for g in graphs]),
        )

    def __len__(self) -> int:
        return len(self.graphs)


GraphLike = Union[DialogueGraph, GraphBatch]


def _as_batch(g: GraphLike) -> GraphBatch:
    return g if isinstance(g, GraphBatch) else GraphBatch.from_graphs([g])


@dataclass
class LayerStates:
    h: list = field(default_factory=list)
    h_hat: list = field(default_factory=list)

    @property
    def num_layers(self) -> int:
        return len(self.h) - 1


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


def add_propagation_params(b: ParamBuilder, cfg: ModelConfig) -> None:
    d = cfg.d_model
    for l in range(cfg.gcn_layers):
        p = f"gcn.{l}"
        for k in range(cfg.lstm_layers):
            d_in = d if k == 0 else 2 * d
            for direction in ("fwd", "bwd"):
                q = f"{p}.lstm.{k}.{direction}"
                b.weight(f"{q}.w_ih", (d_in, 4 * d))
                b.weight(f"{q}.w_hh", (d, 4 * d))
                b.bias(f"{q}.b", 4 * d)
        b.weight(f"{p}.alpha.w", (2 * d, d))
        b.bias(f"{p}.alpha.b", d)
        for etype in EDGE_TYPES:
            b.weight(f"{p}.edge.{etype}.w", (d, d))
            b.bias(f"{p}.edge.{etype}.b", d)


# ---------------------------------------------------------------------------
# recurrent part
# ---------------------------------------------------------------------------


def lstm_direction(x: Tensor, params: ModelParams, prefix: str) -> Tensor:
    """Unidirectional LSTM over (B, T, in) with zero initial state.

    Gate layout along the 4H axis: input, forget, output, candidate.
    """
    B, steps, _ = x.shape
    w_hh = params[f"{prefix}.w_hh"]
    H = w_hh.shape[0]
    xw = x @ params[f"{prefix}.w_ih"] + params[f"{prefix}.b"]
    h = Tensor(np.zeros((B, H)))
    c = Tensor(np.zeros((B, H)))
    outs = []
    for t in range(steps):
        z = xw[:, t, :] + h @ w_hh
        s = T.sigmoid(z[:, : 3 * H])
        g = T.tanh(z[:, 3 * H :])
        c = s[:, H : 2 * H] * c + s[:, :H] * g
        h = s[:, 2 * H : 3 * H] * T.tanh(c)
        outs.append(h)
    return T.stack(outs, axis=1)


def bilstm(x: Tensor, reverse_index: np.ndarray, params: ModelParams, prefix: str, depth: int) -> Tensor:
    """Stacked bidirectional LSTM over padded (B, T, in) sequences.

    ``reverse_index[b]`` reverses the valid prefix of sequence ``b`` and
    leaves padding in place, so padded steps never feed valid ones.
    """
    B = x.shape[0]
    rows = np.arange(B)[:, None]
    inp = x
    for k in range(depth):
        fwd = lstm_direction(inp, params, f"{prefix}.{k}.fwd")
        bwd = lstm_direction(inp[rows, reverse_index], params, f"{prefix}.{k}.bwd")[rows, reverse_index]
        inp = T.concat([fwd, bwd], axis=-1)
    return inp


def bilstm_inject(
    h: Tensor,
    graph: GraphLike,
    layer: int,
    params: ModelParams,
    cfg: ModelConfig,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Replace turn-node features by a projection of their BiLSTM state.

    Non-turn nodes are copied unchanged.  With the ``no_turn_bilstm``
    ablation every node passes through.
    """
    if cfg.no_turn_bilstm:
        return h
    gb = _as_batch(graph)
    p = f"gcn.{layer}"
    seq = h[gb.turn_index]
    states = bilstm(seq, gb.reverse_index, params, f"{p}.lstm", cfg.lstm_layers)
    flat = states[gb.valid_b, gb.valid_t]
    flat = T.dropout(flat, cfg.lstm_dropout, rng, train)
    proj = flat @ params[f"{p}.alpha.w"] + params[f"{p}.alpha.b"]
    return T.concat([h, proj], axis=0)[gb.inject_select]


# ---------------------------------------------------------------------------
# graph convolution
# ---------------------------------------------------------------------------


def gcn_layer(
    graph: GraphLike,
    h_hat: Tensor,
    layer: int,
    params: ModelParams,
    cfg: Optional[ModelConfig] = None,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    gb = _as_batch(graph)
    p = f"gcn.{layer}"
    pre = None
    for etype in EDGE_TYPES:
        a = gb.adjacency.get(etype)
        if a is None:
            continue
        msg = Tensor(a) @ (h_hat @ params[f"{p}.edge.{etype}.w"] + params[f"{p}.edge.{etype}.b"])
        pre = msg if pre is None else pre + msg
    if pre is None:
        pre = Tensor(np.zeros(h_hat.shape))
    out = T.relu(pre)
    rate = cfg.gcn_dropout if cfg is not None else 0.0
    return T.dropout(out, rate, rng, train)


def propagate(
    graph: GraphLike,
    h0: Tensor,
    params: ModelParams,
    cfg: ModelConfig,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> LayerStates:
    gb = _as_batch(graph)
    states = LayerStates(h=[h0])
    h = h0
    for l in range(cfg.gcn_layers):
        h_hat = bilstm_inject(h, gb, l, params, cfg, train, rng)
        h = gcn_layer(gb, h_hat, l, params, cfg, train, rng)
        states.h_hat.append(h_hat)
        states.h.append(h)
    return states
