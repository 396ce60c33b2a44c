"""Speaker-marked input sequences, input embeddings and the context encoder.

The sequence is ``[CLS] d^ [SEP] a^1 [SEP] a^2 [SEP]`` where each turn of
``d^`` is ``s^_i : t_i``.  A turn spoken by the subject (object) carries the
``[S1]`` (``[S2]``) marker instead of its speaker name, and an argument that
names a speaker is replaced by its marker.
"""

from __future__ import annotations

import re
import warnings
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Protocol, Sequence

import numpy as np

from .config import ModelConfig
from .corpus.types import RelationInstance
from .layers import add_attention, add_layer_norm, add_linear, layer_norm, linear, multi_head_attention
from .numerics import ModelParams, ParamBuilder, Tensor
from .numerics import tensor as T

PAD, UNK, CLS, SEP, S1, S2 = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[S1]", "[S2]"
COLON = ":"
SPECIALS = (PAD, UNK, CLS, SEP, S1, S2, COLON)

# speaker-table rows
SPK_NONE, SPK_S1, SPK_S2, SPK_OTHER = 0, 1, 2, 3

_WORD = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def split_words(text: str) -> list[str]:
    """Lowercase, then split into word runs and single punctuation marks."""
    return _WORD.findall(text.lower())


class Vocab:
    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[: len(SPECIALS)]) != SPECIALS:
            raise ValueError("vocabulary must start with the special tokens")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate token in vocabulary")
        self.tokens = tokens
        self._ids = {t: i for i, t in enumerate(tokens)}

    @classmethod
    def build(cls, instances: Iterable[RelationInstance], min_freq: int = 1) -> "Vocab":
        counts: Counter = Counter()
        seen_dialogues = set()
        for inst in instances:
            if id(inst.dialogue) not in seen_dialogues:
                seen_dialogues.add(id(inst.dialogue))
                for turn in inst.dialogue.turns:
                    counts.update(split_words(turn.speaker_id))
                    counts.update(split_words(turn.text))
            counts.update(split_words(inst.subject))
            counts.update(split_words(inst.object))
        words = sorted(w for w, c in counts.items() if c >= min_freq and w not in SPECIALS)
        return cls(list(SPECIALS) + words)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id(self, token: str) -> int:
        return self._ids.get(token, self._ids[UNK])

    def encode(self, words: Iterable[str]) -> list[int]:
        unk = self._ids[UNK]
        return [self._ids.get(w, unk) for w in words]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[int(i)] for i in ids]

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())


class Tokenizer(Protocol):
    vocab: Vocab

    def words(self, text: str) -> list[str]: ...

    def tokenize(self, text: str) -> list[int]: ...


class WordTokenizer:
    """Corpus-built word-level tokenizer with a single OOV id."""

    def __init__(self, vocab: Vocab):
        self.vocab = vocab

    def words(self, text: str) -> list[str]:
        return split_words(text)

    def tokenize(self, text: str) -> list[int]:
        return self.vocab.encode(split_words(text))

    def detokenize(self, ids: Iterable[int]) -> list[str]:
        return self.vocab.decode(ids)


def tokenize(text: str, vocab: Vocab) -> list[int]:
    return WordTokenizer(vocab).tokenize(text)


@dataclass(frozen=True)
class InputSequence:
    tokens: np.ndarray
    segment_ids: np.ndarray
    position_ids: np.ndarray
    speaker_ids: np.ndarray
    turn_spans: tuple
    subject_span: tuple
    object_span: tuple
    cls_index: int = 0
    subject_is_speaker: bool = False
    object_is_speaker: bool = False

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def num_turns(self) -> int:
        return len(self.turn_spans)

    def turn_of_token(self) -> np.ndarray:
        """Turn number (1-based) of every token, 0 outside the dialogue."""
        out = np.zeros(len(self.tokens), dtype=np.int64)
        for i, (b, e) in enumerate(self.turn_spans, 1):
            if np.any(out[b : e + 1]):
                raise ValueError("overlapping turn spans")
            out[b : e + 1] = i
        return out


def _assemble(turns, subject: str, obj: str, tok: Tokenizer, speaker_slots: int) -> InputSequence:
    vocab = tok.vocab
    speakers = {t.speaker_id for t in turns}
    args = []
    for k, (arg, marker, row) in enumerate(((subject, S1, SPK_S1), (obj, S2, SPK_S2)), 1):
        if arg in speakers:
            args.append(([vocab.id(marker)], row, True))
        else:
            ids = tok.tokenize(arg)
            if not ids:
                raise ValueError(f"argument {k} ({arg!r}) tokenizes to nothing")
            args.append((ids, SPK_NONE, False))

    slots: dict[str, int] = {}
    tokens, spk, spans = [vocab.id(CLS)], [SPK_NONE], []
    for t in turns:
        if t.speaker_id == subject:
            marker, row = [vocab.id(S1)], SPK_S1
        elif t.speaker_id == obj:
            marker, row = [vocab.id(S2)], SPK_S2
        else:
            slot = slots.setdefault(t.speaker_id, len(slots))
            marker, row = tok.tokenize(t.speaker_id), SPK_OTHER + min(slot, speaker_slots - 1)
        piece = marker + [vocab.id(COLON)] + tok.tokenize(t.text)
        spans.append((len(tokens), len(tokens) + len(piece) - 1))
        tokens += piece
        spk += [row] * len(piece)
    tokens.append(vocab.id(SEP))
    spk.append(SPK_NONE)
    seg_break = len(tokens)

    arg_spans = []
    for ids, row, _ in args:
        arg_spans.append((len(tokens), len(tokens) + len(ids) - 1))
        tokens += ids + [vocab.id(SEP)]
        spk += [row] * len(ids) + [SPK_NONE]

    n = len(tokens)
    segment = np.zeros(n, dtype=np.int64)
    segment[seg_break:] = 1
    return InputSequence(
        tokens=np.asarray(tokens, dtype=np.int64),
        segment_ids=segment,
        position_ids=np.arange(n, dtype=np.int64),
        speaker_ids=np.asarray(spk, dtype=np.int64),
        turn_spans=tuple(spans),
        subject_span=arg_spans[0],
        object_span=arg_spans[1],
        subject_is_speaker=args[0][2],
        object_is_speaker=args[1][2],
    )


def build_input(inst: RelationInstance, tok: Tokenizer, max_len: int = 512, speaker_slots: int = 8) -> InputSequence:
    """Assemble the input sequence, dropping whole turns from the end to fit ``max_len``."""
    if inst.subject == inst.object:
        warnings.warn("subject equals object; turns are marked with [S1]", stacklevel=2)
    turns = inst.dialogue.turns
    for m in range(len(turns), 0, -1):
        seq = _assemble(turns[:m], inst.subject, inst.object, tok, speaker_slots)
        if len(seq) <= max_len:
            return seq
    raise ValueError(f"sequence cannot fit even one turn within max_len={max_len}")


# ---------------------------------------------------------------------------
# parameters and forward pass
# ---------------------------------------------------------------------------


def add_embedding_params(b: ParamBuilder, cfg: ModelConfig) -> None:
    d = cfg.d_model
    b.weight("emb.token", (cfg.vocab_size, d))
    b.weight("emb.segment", (2, d))
    b.weight("emb.position", (cfg.max_len, d))
    b.weight("emb.speaker", (cfg.speaker_rows, d))


def add_encoder_params(b: ParamBuilder, cfg: ModelConfig) -> None:
    d, ff = cfg.d_model, cfg.ffn_mult * cfg.d_model
    for i in range(cfg.encoder_layers):
        p = f"enc.{i}"
        add_attention(b, f"{p}.attn", d)
        add_layer_norm(b, f"{p}.ln1", d)
        add_linear(b, f"{p}.ff1", d, ff)
        add_linear(b, f"{p}.ff2", ff, d)
        add_layer_norm(b, f"{p}.ln2", d)


def _check_range(ids: np.ndarray, table: Tensor, what: str) -> None:
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"{what} id out of range for table with {table.shape[0]} rows")


def embed_ids(
    tokens: np.ndarray,
    segments: np.ndarray,
    positions: np.ndarray,
    speakers: np.ndarray,
    params: ModelParams,
    use_speaker: bool = True,
) -> Tensor:
    """Token + segment + position (+ speaker) embedding lookup for id arrays of any shape."""
    parts = []
    for ids, name in ((tokens, "token"), (segments, "segment"), (positions, "position"), (speakers, "speaker")):
        if name == "speaker" and not use_speaker:
            continue
        table = params[f"emb.{name}"]
        _check_range(ids, table, name)
        parts.append(table[np.asarray(ids, dtype=np.int64)])
    out = parts[0]
    for p in parts[1:]:
        out = out + p
    return out


def embed(inp: InputSequence, params: ModelParams, use_speaker: bool = True) -> Tensor:
    return embed_ids(inp.tokens, inp.segment_ids, inp.position_ids, inp.speaker_ids, params, use_speaker)


def encode(
    reps: Tensor,
    params: ModelParams,
    cfg: ModelConfig,
    allowed: Optional[np.ndarray] = None,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Post-norm transformer stack over (N, d) or (B, N, d) inputs.

    ``allowed`` restricts attention (used to hide padding); by default every
    position attends every position.
    """
    squeeze = reps.ndim == 2
    x = reps.reshape(1, *reps.shape) if squeeze else reps
    B, N, _ = x.shape
    if allowed is None:
        allowed = np.ones((B, N, N), dtype=bool)
    for i in range(cfg.encoder_layers):
        p = f"enc.{i}"
        a = multi_head_attention(x, allowed, params, f"{p}.attn", cfg.encoder_heads, dropout=cfg.encoder_dropout, train=train, rng=rng)
        a = T.dropout(a, cfg.encoder_dropout, rng, train)
        x = layer_norm(x + a, params, f"{p}.ln1")
        h = linear(T.gelu(linear(x, params, f"{p}.ff1")), params, f"{p}.ff2")
        h = T.dropout(h, cfg.encoder_dropout, rng, train)
        x = layer_norm(x + h, params, f"{p}.ln2")
    return x.reshape(N, -1) if squeeze else x
