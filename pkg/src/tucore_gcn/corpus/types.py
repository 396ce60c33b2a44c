from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional


@dataclass(frozen=True)
class Turn:
    speaker_id: str
    text: str

    def __post_init__(self):
        if not self.speaker_id or not self.speaker_id.strip():
            raise ValueError("turn speaker_id must be non-empty")
        if not self.text or not self.text.strip():
            raise ValueError(f"turn text must be non-empty (speaker {self.speaker_id!r})")


@dataclass(frozen=True)
class Dialogue:
    turns: tuple[Turn, ...]
    dialogue_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        if not self.turns:
            raise ValueError("a dialogue needs at least one turn")

    def __len__(self) -> int:
        return len(self.turns)

    @property
    def speakers(self) -> tuple[str, ...]:
        """Distinct speakers in order of first appearance."""
        seen: dict[str, None] = {}
        for t in self.turns:
            seen.setdefault(t.speaker_id, None)
        return tuple(seen)

    def prefix(self, n: int) -> "Dialogue":
        return Dialogue(self.turns[:n], self.dialogue_id)


class LabelMap:
    """Bidirectional label string <-> external integer id.

    Model-side indices are positions in :attr:`labels`, which are ordered by
    external id.
    """

    def __init__(self, pairs: Iterable[tuple[str, int]]):
        pairs = sorted(((str(l), int(i)) for l, i in pairs), key=lambda p: p[1])
        self.labels: tuple[str, ...] = tuple(l for l, _ in pairs)
        self.ids: tuple[int, ...] = tuple(i for _, i in pairs)
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate label in label map")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate id in label map")
        self._index = {l: k for k, l in enumerate(self.labels)}
        self._by_id = dict(zip(self.ids, self.labels))

    @classmethod
    def from_labels(cls, labels: Iterable[str], start: int = 0) -> "LabelMap":
        return cls((l, start + k) for k, l in enumerate(labels))

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label) -> bool:
        return label in self._index

    def __iter__(self):
        return iter(self.labels)

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelMap) and self.labels == other.labels and self.ids == other.ids

    def __hash__(self) -> int:
        return hash((self.labels, self.ids))

    def __repr__(self) -> str:
        return f"LabelMap({len(self)} labels)"

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"unknown relation label {label!r}") from None

    def label_for_id(self, rid: int) -> str:
        try:
            return self._by_id[int(rid)]
        except KeyError:
            raise KeyError(f"unknown relation id {rid}") from None

    def to_lines(self) -> list[str]:
        return [f"{l}\t{i}" for l, i in zip(self.labels, self.ids)]

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.to_lines()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "LabelMap":
        """Read ``label<TAB>id`` lines; a bare label takes its line number as id."""
        pairs = []
        lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
        for k, line in enumerate(lines):
            if "\t" in line:
                label, rid = line.rsplit("\t", 1)
                pairs.append((label, int(rid)))
            else:
                pairs.append((line.strip(), k))
        return cls(pairs)


@dataclass(frozen=True)
class RelationInstance:
    dialogue: Dialogue
    subject: str
    object: str
    gold_relations: frozenset
    label_space: Optional[LabelMap] = field(default=None, compare=False)
    meta: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "gold_relations", frozenset(self.gold_relations))
        object.__setattr__(self, "meta", tuple(sorted(dict(self.meta).items())))
        if not self.subject or not self.object:
            raise ValueError("subject and object must be non-empty")
        if self.label_space is not None:
            unknown = [r for r in self.gold_relations if r not in self.label_space]
            if unknown:
                raise ValueError(f"relations {unknown} not in label space")

    @property
    def dialogue_id(self) -> str:
        return self.dialogue.dialogue_id

    def with_dialogue(self, dialogue: Dialogue) -> "RelationInstance":
        return RelationInstance(dialogue, self.subject, self.object, self.gold_relations, self.label_space, self.meta)


@dataclass(frozen=True)
class ErcUtteranceRecord:
    speaker: Optional[str]
    utterance: str
    emotion: str
