"""Planted-rule synthetic dialogues for desk-scale training checks.

Three pattern families, each a pure function of the planted tokens:

``speaker_token``
    subject and object are speakers; positive iff a turn spoken by the
    subject contains ``alpha``.  Negatives carry ``alpha`` in another
    speaker's turn.
``mention_keyword``
    subject is a speaker, object a name mentioned in exactly one turn;
    positive iff that turn contains ``beta``.  Negatives carry ``beta``
    in a different turn.
``cross_turn``
    subject and object are names mentioned in two different turns;
    positive iff the subject's turn contains ``gamma`` and the object's
    turn contains ``delta``.  Negatives keep one half of the evidence,
    or swap it.

Labels alternate positive/negative within each family, so every family is
balanced.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .types import Dialogue, LabelMap, RelationInstance, Turn

FAMILIES = ("speaker_token", "mention_keyword", "cross_turn")
KEYWORDS = {"speaker_token": ("alpha",), "mention_keyword": ("beta",), "cross_turn": ("gamma", "delta")}

DEFAULT_VOCAB = (
    "we", "then", "maybe", "went", "home", "really", "said", "that", "later", "coffee",
    "today", "again", "know", "think", "here", "there", "nice", "movie", "call", "okay",
)
DEFAULT_NAMES = ("Alice", "Boris", "Chen", "Dana", "Emil", "Farah", "Gus", "Hana")


@dataclass(frozen=True)
class SynthConfig:
    num_instances: int = 64
    num_speakers: int = 3
    vocab: tuple = DEFAULT_VOCAB
    relation_rules: tuple = FAMILIES
    labels: tuple = ("per:positive", "per:negative")
    names: tuple = DEFAULT_NAMES
    min_turns: int = 4
    max_turns: int = 6
    filler_range: tuple = (2, 5)

    def validate(self) -> None:
        if self.num_instances < 0:
            raise ValueError("num_instances must be >= 0")
        if len(self.labels) < 2 or len(set(self.labels)) != len(self.labels):
            raise ValueError("need at least two distinct relation labels")
        if self.num_speakers < 2:
            raise ValueError("need at least two speakers")
        unknown = set(self.relation_rules) - set(FAMILIES)
        if unknown or not self.relation_rules:
            raise ValueError(f"unknown or empty relation_rules: {sorted(unknown)}")
        if self.min_turns < 3 or self.max_turns < self.min_turns:
            raise ValueError("turn range must satisfy 3 <= min_turns <= max_turns")
        if len(self.names) < 2:
            raise ValueError("need at least two mention names")
        reserved = {w for kws in KEYWORDS.values() for w in kws} | {n.lower() for n in self.names} | {"speaker"}
        clash = reserved & {w.lower() for w in self.vocab}
        if clash or not self.vocab:
            raise ValueError(f"filler vocabulary must be non-empty and avoid reserved words {sorted(clash)}")

    def label_pair(self, family: str) -> tuple[str, str]:
        k = FAMILIES.index(family) % (len(self.labels) - 1)
        return self.labels[k], self.labels[-1]

    def label_map(self) -> LabelMap:
        return LabelMap.from_labels(self.labels)


@dataclass
class _Draft:
    speakers: list
    words: list = field(default_factory=list)

    def plant(self, turn: int, token: str, rng) -> None:
        pos = int(rng.integers(len(self.words[turn]) + 1))
        self.words[turn].insert(pos, token)


def _speaker_name(k: int) -> str:
    return f"Speaker {k}"


def _draft(cfg: SynthConfig, rng: np.random.Generator) -> _Draft:
    m = int(rng.integers(cfg.min_turns, cfg.max_turns + 1))
    speakers = [_speaker_name(int(rng.integers(1, cfg.num_speakers + 1))) for _ in range(m)]
    # keep at least two distinct speakers
    if len(set(speakers)) == 1:
        alt = 1 + (int(speakers[0].split()[1]) % cfg.num_speakers)
        speakers[int(rng.integers(m))] = _speaker_name(alt)
    lo, hi = cfg.filler_range
    words = [list(rng.choice(cfg.vocab, size=int(rng.integers(lo, hi + 1)))) for _ in range(m)]
    return _Draft(speakers, words)


def _render(d: _Draft, cid: str) -> Dialogue:
    turns = []
    for spk, ws in zip(d.speakers, d.words):
        text = " ".join(str(w) for w in ws)
        turns.append(Turn(spk, text[:1].upper() + text[1:] + "."))
    return Dialogue(tuple(turns), cid)


def _speaker_token(cfg, rng, positive, cid):
    d = _draft(cfg, rng)
    present = sorted(set(d.speakers))
    subj = present[int(rng.integers(len(present)))]
    others = [s for s in present if s != subj]
    obj = others[int(rng.integers(len(others)))]
    own = [i for i, s in enumerate(d.speakers) if s == subj]
    foreign = [i for i, s in enumerate(d.speakers) if s != subj]
    host = own if positive else foreign
    d.plant(int(rng.choice(host)), "alpha", rng)
    return _render(d, cid), subj, obj


def _mention_keyword(cfg, rng, positive, cid):
    d = _draft(cfg, rng)
    m = len(d.speakers)
    subj = d.speakers[int(rng.integers(m))]
    name = str(rng.choice(cfg.names))
    i = int(rng.integers(m))
    d.plant(i, name, rng)
    if positive:
        d.plant(i, "beta", rng)
    else:
        d.plant(int(rng.choice([k for k in range(m) if k != i])), "beta", rng)
    return _render(d, cid), subj, name


def _cross_turn(cfg, rng, positive, cid):
    d = _draft(cfg, rng)
    m = len(d.speakers)
    e1, e2 = (str(x) for x in rng.choice(cfg.names, size=2, replace=False))
    i, j = (int(x) for x in rng.choice(m, size=2, replace=False))
    d.plant(i, e1, rng)
    d.plant(j, e2, rng)
    if positive:
        d.plant(i, "gamma", rng)
        d.plant(j, "delta", rng)
    else:
        k = int(rng.choice([t for t in range(m) if t not in (i, j)]))
        mode = int(rng.integers(3))
        if mode == 0:
            d.plant(i, "gamma", rng)
            d.plant(k, "delta", rng)
        elif mode == 1:
            d.plant(k, "gamma", rng)
            d.plant(j, "delta", rng)
        else:
            d.plant(j, "gamma", rng)
            d.plant(i, "delta", rng)
    return _render(d, cid), e1, e2


_BUILDERS = {"speaker_token": _speaker_token, "mention_keyword": _mention_keyword, "cross_turn": _cross_turn}


def gen_synthetic(cfg: SynthConfig, seed: int) -> list[RelationInstance]:
    cfg.validate()
    rng = np.random.default_rng(seed)
    labels = cfg.label_map()
    counts = {f: 0 for f in cfg.relation_rules}
    out = []
    for k in range(cfg.num_instances):
        family = cfg.relation_rules[k % len(cfg.relation_rules)]
        positive = counts[family] % 2 == 0
        counts[family] += 1
        dialogue, subj, obj = _BUILDERS[family](cfg, rng, positive, f"synth-{seed}-{k}")
        pos_label, neg_label = cfg.label_pair(family)
        gold = frozenset([pos_label if positive else neg_label])
        out.append(RelationInstance(dialogue, subj, obj, gold, labels, (("family", family),)))
    return out


def family_of(inst: RelationInstance) -> str:
    return dict(inst.meta).get("family", "")
