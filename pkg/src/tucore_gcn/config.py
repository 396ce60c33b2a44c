"""Model and training configuration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

ABLATIONS = ("no_speaker_embedding", "no_turn_attention", "no_turn_bilstm")
TASKS = ("dialog_re", "erc")


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = 0
    num_labels: int = 0
    d_model: int = 768
    encoder_layers: int = 12
    encoder_heads: int = 12
    ffn_mult: int = 4
    max_len: int = 512
    speaker_slots: int = 8
    turn_heads: int = 12
    surround_window: int = 1
    lstm_layers: int = 2
    gcn_layers: int = 2
    encoder_dropout: float = 0.1
    attention_dropout: float = 0.1
    lstm_dropout: float = 0.2
    gcn_dropout: float = 0.6
    no_speaker_embedding: bool = False
    no_turn_attention: bool = False
    no_turn_bilstm: bool = False

    @property
    def speaker_rows(self) -> int:
        # none, [S1], [S2], then one row per other-speaker slot
        return 3 + self.speaker_slots

    @property
    def feature_dim(self) -> int:
        return 3 * (self.gcn_layers + 1) * self.d_model

    def validate(self) -> None:
        positive = ("vocab_size", "num_labels", "d_model", "encoder_heads", "ffn_mult", "max_len", "speaker_slots", "turn_heads", "lstm_layers")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("encoder_layers", "gcn_layers", "surround_window"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("encoder_dropout", "attention_dropout", "lstm_dropout", "gcn_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.d_model % self.encoder_heads or self.d_model % self.turn_heads:
            raise ValueError("d_model must be divisible by the head counts")

    def ablate(self, *flags: str) -> "ModelConfig":
        unknown = set(flags) - set(ABLATIONS)
        if unknown:
            raise ValueError(f"unknown ablation flags: {sorted(unknown)}")
        return replace(self, **{f: True for f in flags})

    def deterministic(self) -> "ModelConfig":
        return replace(self, encoder_dropout=0.0, attention_dropout=0.0, lstm_dropout=0.0, gcn_dropout=0.0)


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    task: str = "dialog_re"
    epochs: int = 20
    max_steps: int = 0
    batch_size: int = 12
    learning_rate: float = 3e-5
    weight_decay: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    excluded_label: str = "neutral"

    def validate(self) -> None:
        self.model.validate()
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if self.learning_rate <= 0 or not 0.0 <= self.weight_decay < 1.0:
            raise ValueError("invalid learning_rate or weight_decay")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "TrainConfig":
        raw = dict(raw)
        model_raw = dict(raw.pop("model", {}))
        known_m = {f.name for f in fields(ModelConfig)}
        known_t = {f.name for f in fields(cls)} - {"model"}
        for key in list(raw):
            if key in known_m and key not in known_t:
                model_raw[key] = raw.pop(key)
        bad = (set(model_raw) - known_m) | (set(raw) - known_t)
        if bad:
            raise ValueError(f"unknown config keys: {sorted(bad)}")
        return cls(model=ModelConfig(**model_raw), **raw)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def with_model(self, **changes) -> "TrainConfig":
        return replace(self, model=replace(self.model, **changes))


# Structure-preserving shrink of the published setting.
DESK_MODEL = ModelConfig(
    d_model=64,
    encoder_layers=2,
    encoder_heads=4,
    max_len=128,
    turn_heads=4,
)

PRESETS = {
    "paper": TrainConfig(),
    "desk": TrainConfig(model=DESK_MODEL, epochs=60, batch_size=8, learning_rate=1e-3),
    "tiny": TrainConfig(
        model=replace(DESK_MODEL, d_model=16, encoder_heads=2, turn_heads=2, speaker_slots=4, max_len=96),
        epochs=5,
        batch_size=4,
        learning_rate=1e-3,
    ),
}
