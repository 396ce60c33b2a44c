"""Heterogeneous dialogue graph: dialogue, turn, subject and object nodes.

Node numbering for a dialogue with M turns: 0 is the dialogue node,
1..M are the turn nodes, M+1 the subject node and M+2 the object node.
Edges are undirected and stored once as ``(u, v, type)`` with ``u < v``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .corpus.types import RelationInstance, Turn
from .encoding import InputSequence, split_words
from .numerics import Tensor

EDGE_TYPES = ("dialogue", "argument", "speaker")
NODE_TYPES = ("dialogue", "turn", "subject", "object")


def contains_tokens(haystack: Sequence[str], needle: Sequence[str]) -> bool:
    n = len(needle)
    if n == 0:
        return False
    return any(list(haystack[i : i + n]) == list(needle) for i in range(len(haystack) - n + 1))


def mentions(argument: str, turn: Turn, words: Callable[[str], list] = split_words) -> bool:
    """True when the argument is the turn's speaker or occurs, token-wise, in its text."""
    if argument == turn.speaker_id:
        return True
    return contains_tokens(words(turn.text), words(argument))


@dataclass(frozen=True)
class DialogueGraph:
    num_turns: int
    edges: tuple

    @property
    def num_nodes(self) -> int:
        return self.num_turns + 3

    @property
    def subject_node(self) -> int:
        return self.num_turns + 1

    @property
    def object_node(self) -> int:
        return self.num_turns + 2

    def node_type(self, u: int) -> str:
        if u == 0:
            return "dialogue"
        if u <= self.num_turns:
            return "turn"
        return "subject" if u == self.subject_node else "object"

    def edges_of(self, etype: str) -> list[tuple[int, int]]:
        return [(u, v) for u, v, t in self.edges if t == etype]

    def neighbors(self, u: int, etype: str) -> list[int]:
        out = []
        for a, b, t in self.edges:
            if t != etype:
                continue
            if a == u:
                out.append(b)
            elif b == u:
                out.append(a)
        return out

    def degree(self, u: int) -> int:
        return sum(1 for a, b, _ in self.edges if u in (a, b))

    def adjacency(self, etype: str) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes))
        for u, v in self.edges_of(etype):
            a[u, v] += 1.0
            a[v, u] += 1.0
        return a

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": u, "type": self.node_type(u)} for u in range(self.num_nodes)],
            "edges": {t: [list(e) for e in self.edges_of(t)] for t in EDGE_TYPES},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def build_graph(inp: InputSequence, inst: RelationInstance) -> DialogueGraph:
    """Graph over the turns actually present in ``inp`` (after truncation)."""
    turns = inst.dialogue.turns[: inp.num_turns]
    m = len(turns)
    subj, obj = m + 1, m + 2
    edges = set()
    for i in range(1, m + 1):
        edges.add((0, i, "dialogue"))
    for i, turn in enumerate(turns, 1):
        if mentions(inst.subject, turn):
            edges.add((i, subj, "argument"))
        if mentions(inst.object, turn):
            edges.add((i, obj, "argument"))
    by_speaker: dict[str, list[int]] = {}
    for i, turn in enumerate(turns, 1):
        by_speaker.setdefault(turn.speaker_id, []).append(i)
    for nodes in by_speaker.values():
        for u, v in combinations(nodes, 2):
            edges.add((u, v, "speaker"))
    return DialogueGraph(m, tuple(sorted(edges, key=lambda e: (EDGE_TYPES.index(e[2]), e[0], e[1]))))


def pooling_matrix(inp: InputSequence) -> np.ndarray:
    """Rows average the token span of each node: [CLS], turns, subject, object."""
    n = len(inp)
    spans = [(inp.cls_index, inp.cls_index), *inp.turn_spans, inp.subject_span, inp.object_span]
    p = np.zeros((len(spans), n))
    for r, (b, e) in enumerate(spans):
        if e < b:
            raise ValueError("empty span")
        p[r, b : e + 1] = 1.0 / (e - b + 1)
    return p


def init_node_features(x: Tensor, graph: DialogueGraph, inp: InputSequence) -> Tensor:
    """(num_nodes, d) initial node features from token representations ``x`` (N, d)."""
    p = pooling_matrix(inp)
    if p.shape[0] != graph.num_nodes:
        raise ValueError("graph and input sequence disagree on the number of turns")
    return Tensor(p) @ x
