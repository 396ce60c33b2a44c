"""Canonical JSONL formats for relation instances and ERC conversations.

Relation dataset, one record per line::

    {"dialogue_id": ..., "turns": [{"speaker": ..., "text": ...}, ...],
     "subject": ..., "object": ..., "relations": [...], "meta": {...}}

ERC conversations, one conversation per line::

    {"conversation_id": ..., "utterances": [{"speaker": ..., "utterance": ..., "emotion": ...}]}

``speaker`` may be omitted (or null) for corpora without speaker
information; :func:`~tucore_gcn.corpus.erc.assign_alternating_speakers`
fills it in.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Optional

from .types import Dialogue, ErcUtteranceRecord, LabelMap, RelationInstance, Turn


class DataError(ValueError):
    """Malformed or inconsistent dataset input."""


def instance_to_record(inst: RelationInstance) -> dict:
    rec = {
        "dialogue_id": inst.dialogue_id,
        "turns": [{"speaker": t.speaker_id, "text": t.text} for t in inst.dialogue.turns],
        "subject": inst.subject,
        "object": inst.object,
        "relations": sorted(inst.gold_relations),
    }
    if inst.meta:
        rec["meta"] = dict(inst.meta)
    return rec


def write_dataset(path, instances: Iterable[RelationInstance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_record(inst), ensure_ascii=False, sort_keys=True) + "\n")


def records_to_instances(records: Iterable[dict], labels: Optional[LabelMap] = None) -> list[RelationInstance]:
    dialogues: dict[tuple, Dialogue] = {}
    out = []
    for n, rec in enumerate(records, 1):
        try:
            turns = tuple(Turn(t["speaker"], t["text"]) for t in rec["turns"])
            key = (rec.get("dialogue_id", ""), turns)
            dlg = dialogues.get(key)
            if dlg is None:
                dlg = dialogues[key] = Dialogue(turns, rec.get("dialogue_id", ""))
            out.append(
                RelationInstance(dlg, rec["subject"], rec["object"], frozenset(rec["relations"]), labels, tuple(rec.get("meta", {}).items()))
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"record {n}: {exc}") from exc
    return out


def read_dataset(path, labels: Optional[LabelMap] = None) -> list[RelationInstance]:
    """Read canonical JSONL; records sharing dialogue id and turns share one Dialogue."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{n}: {exc}") from exc
    return records_to_instances(records, labels)


def labels_in(instances: Iterable[RelationInstance]) -> LabelMap:
    """Label map over every relation seen, sorted alphabetically."""
    seen = sorted({r for inst in instances for r in inst.gold_relations})
    return LabelMap.from_labels(seen)


def read_erc(path) -> list[tuple[str, list[ErcUtteranceRecord]]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                utts = [ErcUtteranceRecord(u.get("speaker"), u["utterance"], u["emotion"]) for u in obj["utterances"]]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{n}: {exc}") from exc
            out.append((str(obj.get("conversation_id", n - 1)), utts))
    return out


def write_erc(path, conversations: Iterable[tuple[str, list[ErcUtteranceRecord]]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cid, utts in conversations:
            obj = {
                "conversation_id": cid,
                "utterances": [{"speaker": u.speaker, "utterance": u.utterance, "emotion": u.emotion} for u in utts],
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def read_lines(path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()
