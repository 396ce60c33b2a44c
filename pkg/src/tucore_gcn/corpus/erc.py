"""Emotion recognition in conversation recast as dialogue relation extraction.

Each utterance becomes one triple (speaker, emotion, utterance) over the
speaker-anonymised conversation.
"""

from __future__ import annotations

from typing import Optional, Sequence

from .types import Dialogue, ErcUtteranceRecord, LabelMap, RelationInstance, Turn


def anonymize_speakers(dialogue: Dialogue) -> tuple[Dialogue, dict[str, str]]:
    """Rename speakers to S1, S2, ... in order of first appearance."""
    mapping = {s: f"S{k}" for k, s in enumerate(dialogue.speakers, 1)}
    turns = tuple(Turn(mapping[t.speaker_id], t.text) for t in dialogue.turns)
    return Dialogue(turns, dialogue.dialogue_id), mapping


def assign_alternating_speakers(conversation: Sequence[ErcUtteranceRecord]) -> list[ErcUtteranceRecord]:
    """Give turns 1, 3, 5, ... speaker S1 and turns 2, 4, ... speaker S2."""
    return [ErcUtteranceRecord("S1" if k % 2 == 0 else "S2", u.utterance, u.emotion) for k, u in enumerate(conversation)]


def erc_to_re(
    conversation: Sequence[ErcUtteranceRecord],
    labels: Optional[LabelMap] = None,
    conversation_id: str = "",
) -> list[RelationInstance]:
    if not conversation:
        raise ValueError("cannot convert an empty conversation")
    if any(u.speaker is None for u in conversation):
        if not all(u.speaker is None for u in conversation):
            raise ValueError("speaker information is present for only some utterances")
        conversation = assign_alternating_speakers(conversation)
    raw = Dialogue(tuple(Turn(u.speaker, u.utterance) for u in conversation), conversation_id)
    dialogue, _ = anonymize_speakers(raw)
    return [
        RelationInstance(dialogue, turn.speaker_id, turn.text, frozenset([u.emotion]), labels)
        for turn, u in zip(dialogue.turns, conversation)
    ]
