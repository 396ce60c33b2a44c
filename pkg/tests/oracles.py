"""Brute-force reference implementations used by the tests."""

from itertools import product

import numpy as np

from tucore_gcn.corpus import Dialogue, RelationInstance, Turn

WORDS = ("hey", "you", "late", "again", "brother", "coffee", "why", "ok", "frank", "emma", "new", "york")
SPEAKERS = ("S1", "S2", "S3", "Speaker 4", "Ross")


def random_instance(rng: np.random.Generator, max_turns: int = 12) -> RelationInstance:
    m = int(rng.integers(1, max_turns + 1))
    turns = []
    for _ in range(m):
        spk = SPEAKERS[int(rng.integers(len(SPEAKERS)))]
        n = int(rng.integers(1, 6))
        words = [WORDS[int(k)] for k in rng.integers(len(WORDS), size=n)]
        if rng.random() < 0.3:
            words.insert(int(rng.integers(n + 1)), "new york")
        turns.append(Turn(spk, " ".join(words) + rng.choice([".", "?", "!"])))
    pool = list(SPEAKERS) + ["Frank", "Emma", "New York", "Zed"]
    subj = pool[int(rng.integers(len(pool)))]
    obj = pool[int(rng.integers(len(pool)))]
    while obj == subj:
        obj = pool[int(rng.integers(len(pool)))]
    return RelationInstance(Dialogue(tuple(turns)), subj, obj, frozenset())


def surround_oracle(turn_spans, n: int, c: int) -> np.ndarray:
    """Per token pair: allowed iff the pair is the diagonal, or the row token is in
    the dialogue and the column token lies in a turn within c of the row's turn."""
    m_turns = len(turn_spans)

    def turn(pos):
        for z, (b, e) in enumerate(turn_spans, 1):
            if b <= pos <= e:
                return z
        return None

    turns = [turn(pos) for pos in range(n)]
    out = np.zeros((n, n), dtype=bool)
    for m, k in product(range(n), repeat=2):
        zm = turns[m]
        if zm is None:
            out[m, k] = m == k
            continue
        zk = turns[k]
        out[m, k] = m == k or (zk is not None and max(1, zm - c) <= zk <= min(m_turns, zm + c))
    return out


def _mentioned(arg: str, turn: Turn) -> bool:
    if turn.speaker_id == arg:
        return True
    import re

    norm = lambda s: " " + " ".join(re.findall(r"\w+|[^\w\s]", s.lower())) + " "
    needle = norm(arg)
    return needle.strip() != "" and needle in norm(turn.text)


def graph_oracle(inst: RelationInstance, num_turns: int) -> set:
    """Edge set by testing every node pair against each rule separately."""
    turns = inst.dialogue.turns[:num_turns]
    m = len(turns)
    nodes = range(m + 3)
    subj, obj = m + 1, m + 2
    is_turn = lambda u: 1 <= u <= m
    edges = set()
    for u, v in product(nodes, repeat=2):
        if u >= v:
            continue
        if u == 0 and is_turn(v):
            edges.add((u, v, "dialogue"))
        if is_turn(u) and v == subj and _mentioned(inst.subject, turns[u - 1]):
            edges.add((u, v, "argument"))
        if is_turn(u) and v == obj and _mentioned(inst.object, turns[u - 1]):
            edges.add((u, v, "argument"))
        if is_turn(u) and is_turn(v) and turns[u - 1].speaker_id == turns[v - 1].speaker_id:
            edges.add((u, v, "speaker"))
    return edges
