"""End-to-end forward pass: encoder, turn attention, dialogue graph, classifier."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .classifier import MULTI_LABEL, SINGLE_LABEL, RelationScores, add_classifier_params, bce_loss, build_feature, decide_labels, gold_matrix, predict_probs
from .config import ModelConfig
from .corpus.types import LabelMap, RelationInstance
from .encoding import InputSequence, Vocab, WordTokenizer, add_embedding_params, add_encoder_params, build_input, embed_ids, encode
from .graph import DialogueGraph, build_graph, pooling_matrix
from .numerics import ModelParams, ParamBuilder, Tensor
from .numerics import tensor as T
from .propagation import GraphBatch, add_propagation_params, propagate
from .turn_attention import add_turn_attention_params, build_surround_mask, turn_attend


def init_params(cfg: ModelConfig, seed: int = 0) -> ModelParams:
    """Fan-scaled uniform weights, zero biases, unit layer-norm gains."""
    cfg.validate()
    params = ModelParams()
    b = ParamBuilder(params, np.random.default_rng(seed))
    add_embedding_params(b, cfg)
    add_encoder_params(b, cfg)
    add_turn_attention_params(b, cfg)
    add_propagation_params(b, cfg)
    add_classifier_params(b, cfg)
    return params


@dataclass(frozen=True)
class Example:
    instance: RelationInstance
    inp: InputSequence
    graph: DialogueGraph
    gold: frozenset


@dataclass
class Batch:
    tokens: np.ndarray
    segments: np.ndarray
    positions: np.ndarray
    speakers: np.ndarray
    encoder_allowed: np.ndarray
    surround_allowed: np.ndarray
    pool: np.ndarray
    graphs: GraphBatch
    gold: np.ndarray

    def __len__(self) -> int:
        return self.tokens.shape[0]


def collate(examples: Sequence[Example], surround_window: int, num_labels: int) -> Batch:
    """Pad to the longest sequence; padding is excluded from every attention row but its own."""
    B = len(examples)
    N = max(len(e.inp) for e in examples)
    tokens = np.zeros((B, N), dtype=np.int64)
    segments = np.zeros((B, N), dtype=np.int64)
    positions = np.tile(np.arange(N, dtype=np.int64), (B, 1))
    speakers = np.zeros((B, N), dtype=np.int64)
    enc = np.zeros((B, N, N), dtype=bool)
    sur = np.zeros((B, N, N), dtype=bool)
    pools = []
    for b, e in enumerate(examples):
        n = len(e.inp)
        tokens[b, :n] = e.inp.tokens
        segments[b, :n] = e.inp.segment_ids
        speakers[b, :n] = e.inp.speaker_ids
        enc[b] = np.eye(N, dtype=bool)
        enc[b, :n, :n] = True
        sur[b] = build_surround_mask(e.inp, surround_window).padded(N)
        p = np.zeros((e.graph.num_nodes, B * N))
        p[:, b * N : b * N + n] = pooling_matrix(e.inp)
        pools.append(p)
    return Batch(
        tokens=tokens,
        segments=segments,
        positions=positions,
        speakers=speakers,
        encoder_allowed=enc,
        surround_allowed=sur,
        pool=np.concatenate(pools, axis=0),
        graphs=GraphBatch.from_graphs([e.graph for e in examples]),
        gold=gold_matrix([sorted(e.gold) for e in examples], num_labels),
    )


def forward(
    batch: Batch,
    params: ModelParams,
    cfg: ModelConfig,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
    trace: Optional[dict] = None,
) -> RelationScores:
    x = embed_ids(batch.tokens, batch.segments, batch.positions, batch.speakers, params, use_speaker=not cfg.no_speaker_embedding)
    x = T.dropout(x, cfg.encoder_dropout, rng, train)
    x = encode(x, params, cfg, batch.encoder_allowed, train, rng)
    if trace is not None:
        trace["encoded"] = x
    if not cfg.no_turn_attention:
        x = turn_attend(x, batch.surround_allowed, params, cfg, train, rng)
    if trace is not None:
        trace["turn_attended"] = x
    B, N, d = x.shape
    h0 = Tensor(batch.pool) @ x.reshape(B * N, d)
    states = propagate(batch.graphs, h0, params, cfg, train, rng)
    feature = build_feature(states, batch.graphs, cfg.gcn_layers)
    if trace is not None:
        trace.update(h0=h0, states=states, feature=feature)
    return predict_probs(feature, params)


class TucoreModel:
    """Parameters plus everything needed to turn instances into predictions."""

    def __init__(self, cfg: ModelConfig, vocab: Vocab, labels: LabelMap, params: Optional[ModelParams] = None, task: str = "dialog_re", seed: int = 0):
        self.cfg = cfg
        self.vocab = vocab
        self.labels = labels
        self.tokenizer = WordTokenizer(vocab)
        self.task = task
        self.params = params if params is not None else init_params(cfg, seed)

    @property
    def decode_mode(self) -> str:
        return SINGLE_LABEL if self.task == "erc" else MULTI_LABEL

    def example(self, inst: RelationInstance) -> Example:
        inp = build_input(inst, self.tokenizer, self.cfg.max_len, self.cfg.speaker_slots)
        gold = frozenset(self.labels.index(r) for r in inst.gold_relations)
        return Example(inst, inp, build_graph(inp, inst), gold)

    def prepare(self, instances: Sequence[RelationInstance]) -> list[Example]:
        return [self.example(inst) for inst in instances]

    def batch(self, examples: Sequence[Example]) -> Batch:
        return collate(examples, self.cfg.surround_window, len(self.labels))

    def loss(self, examples: Sequence[Example], train: bool = False, rng=None, cfg: Optional[ModelConfig] = None) -> Tensor:
        """Mean over instances of the label-summed binary cross-entropy."""
        batch = self.batch(examples)
        scores = forward(batch, self.params, cfg or self.cfg, train, rng)
        return bce_loss(scores, batch.gold) * (1.0 / len(batch))

    def probabilities(self, instances: Sequence[RelationInstance], batch_size: int = 16, cfg: Optional[ModelConfig] = None) -> np.ndarray:
        examples = [e if isinstance(e, Example) else self.example(e) for e in instances]
        out = []
        for i in range(0, len(examples), batch_size):
            scores = forward(self.batch(examples[i : i + batch_size]), self.params, cfg or self.cfg)
            out.append(scores.probs)
        return np.concatenate(out, axis=0) if out else np.zeros((0, len(self.labels)))

    def predict(self, instances: Sequence[RelationInstance], batch_size: int = 16) -> list[frozenset]:
        probs = self.probabilities(instances, batch_size)
        return [frozenset(self.labels.labels[k] for k in decide_labels(row, self.decode_mode)) for row in probs]
