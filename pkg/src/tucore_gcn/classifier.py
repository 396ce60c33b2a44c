"""Classification head: layer-concatenated node features, sigmoid scores, loss, decoding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import ModelConfig
from .numerics import ModelParams, ParamBuilder, Tensor
from .numerics import tensor as T
from .propagation import GraphBatch, LayerStates

MULTI_LABEL = "multi_label"
SINGLE_LABEL = "single_label"


def add_classifier_params(b: ParamBuilder, cfg: ModelConfig) -> None:
    b.weight("cls.w", (cfg.num_labels, cfg.feature_dim), fan_in=cfg.feature_dim, fan_out=cfg.num_labels)


def build_feature(states: LayerStates, graphs: GraphBatch, num_layers: int | None = None) -> Tensor:
    """(B, 3(G+1)d): dialogue, subject, object states of every layer, layers ascending."""
    if num_layers is not None and states.num_layers != num_layers:
        raise ValueError(f"expected states for {num_layers + 1} layers, got {len(states.h)}")
    idx = np.stack([graphs.dialogue_nodes, graphs.subject_nodes, graphs.object_nodes], axis=1)
    B = len(graphs)
    parts = [h[idx].reshape(B, -1) for h in states.h]
    return parts[0] if len(parts) == 1 else T.concat(parts, axis=1)


@dataclass
class RelationScores:
    logits: Tensor

    @property
    def probs(self) -> np.ndarray:
        return T._sigmoid(self.logits.data)


def predict_probs(feature: Tensor, params: ModelParams) -> RelationScores:
    w = params["cls.w"]
    if feature.shape[-1] != w.shape[1]:
        raise ValueError(f"feature dimension {feature.shape[-1]} != classifier width {w.shape[1]}")
    return RelationScores(feature @ T.transpose(w))


def gold_matrix(golds: Sequence[Sequence[int]], num_labels: int) -> np.ndarray:
    y = np.zeros((len(golds), num_labels))
    for b, g in enumerate(golds):
        for r in g:
            y[b, r] = 1.0
    return y


def bce_loss(scores: RelationScores, gold: np.ndarray) -> Tensor:
    """Binary cross-entropy summed over labels (and over rows, for a batch)."""
    return T.bce_with_logits(scores.logits, gold)


def decide_labels(probs: np.ndarray, mode: str = MULTI_LABEL, threshold: float = 0.5) -> frozenset:
    """Label indices predicted from one row of probabilities.

    ``multi_label`` keeps every label above ``threshold`` and falls back to
    the argmax; ``single_label`` returns the argmax.  Ties go to the lowest
    index.
    """
    probs = np.asarray(probs)
    if mode == SINGLE_LABEL:
        return frozenset([int(np.argmax(probs))])
    if mode != MULTI_LABEL:
        raise ValueError(f"unknown decoding mode {mode!r}")
    chosen = frozenset(int(i) for i in np.flatnonzero(probs > threshold))
    return chosen or frozenset([int(np.argmax(probs))])
