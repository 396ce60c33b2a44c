"""Reader for the published DialogRE JSON layout.

A file is a list of ``[turns, relations]`` pairs.  ``turns`` are strings of
the form ``"Speaker 1: text"``; each relation entry carries ``x``, ``y``,
``rid`` (1-based ids), ``r`` (label strings) and entity types ``x_type`` /
``y_type``, which are kept as opaque metadata.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .io import DataError
from .types import Dialogue, LabelMap, RelationInstance, Turn

log = logging.getLogger(__name__)

NO_RELATION = "unanswerable"


def parse_turn(raw: str) -> Turn:
    """Split ``"speaker: text"`` on the first ``": "``.

    Compound speakers such as ``"Speaker 1, Speaker 2"`` are kept verbatim.
    """
    speaker, sep, text = raw.partition(": ")
    if not sep or not speaker.strip():
        raise DataError(f"turn without a speaker separator: {raw!r}")
    return Turn(speaker.strip(), text.strip())


def _load(path) -> list:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed JSON: {exc}") from exc
    if not isinstance(data, list):
        raise DataError(f"{path}: expected a top-level list")
    return data


def label_map_from_files(paths: Iterable) -> LabelMap:
    """Collect the ``rid`` -> ``r`` pairing observed across files."""
    pairs: dict[int, str] = {}
    for path in paths:
        for entry in _load(path):
            for rel in entry[1]:
                for rid, name in zip(rel["rid"], rel["r"]):
                    if pairs.setdefault(int(rid), name) != name:
                        raise DataError(f"relation id {rid} maps to both {pairs[int(rid)]!r} and {name!r}")
    return LabelMap((name, rid) for rid, name in pairs.items())


def import_dialogre(path, labels: Optional[LabelMap] = None) -> list[RelationInstance]:
    """One instance per (dialogue, x, y) entry; instances of a dialogue share it."""
    if labels is None:
        labels = label_map_from_files([path])
    data = _load(path)
    stem = Path(path).stem
    out: list[RelationInstance] = []
    for k, entry in enumerate(data):
        if not (isinstance(entry, list) and len(entry) == 2):
            raise DataError(f"{path}: entry {k} is not a [turns, relations] pair")
        raw_turns, relations = entry
        try:
            dialogue = Dialogue(tuple(parse_turn(t) for t in raw_turns), f"{stem}-{k}")
        except ValueError as exc:
            raise DataError(f"{path}: dialogue {k}: {exc}") from exc
        for rel in relations:
            try:
                gold = frozenset(labels.label_for_id(rid) for rid in rel["rid"])
            except KeyError as exc:
                raise DataError(f"{path}: dialogue {k}: {exc.args[0]}") from exc
            meta = {key: rel[key] for key in ("x_type", "y_type") if key in rel}
            out.append(RelationInstance(dialogue, rel["x"], rel["y"], gold, labels, tuple(meta.items())))
    stats = summarize(out)
    log.info("%s: %d dialogues, %d triples", path, stats.dialogues, stats.triples)
    return out


@dataclass(frozen=True)
class CorpusStats:
    dialogues: int
    pairs: int
    triples: int
    relation_types: int


def summarize(instances: Iterable[RelationInstance]) -> CorpusStats:
    """Count dialogues, argument pairs and relational triples.

    Triples exclude the DialogRE no-relation label.
    """
    instances = list(instances)
    dialogues = {inst.dialogue_id or id(inst.dialogue) for inst in instances}
    rels = {r for inst in instances for r in inst.gold_relations if r != NO_RELATION}
    triples = sum(len(inst.gold_relations - {NO_RELATION}) for inst in instances)
    return CorpusStats(len(dialogues), len(instances), triples, len(rels))
