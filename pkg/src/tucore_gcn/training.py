"""Optimisation, checkpoints and evaluation."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import ModelConfig, TrainConfig
from .corpus.io import instance_to_record, labels_in
from .corpus.types import LabelMap, RelationInstance
from .encoding import Vocab
from .metrics import MetricsReport, score_f1c, score_micro_f1_excl, score_triples, score_weighted_f1
from .model import TucoreModel
from .numerics import GradTape, ModelParams, NumericalError
from .numerics import checkpoint as ckpt_io

log = logging.getLogger(__name__)

DIALOG_RE_METRICS = ("f1", "f1c")
ERC_METRICS = ("weighted_f1", "micro_f1_excl")


class TrainingDiverged(NumericalError):
    pass


def _no_decay(name: str) -> bool:
    # biases and layer-norm gains
    return name.endswith(".b") or name.endswith(".g")


class AdamW:
    """Adam with bias correction and decoupled weight decay.

    Decay is applied directly to the parameter (never folded into the
    gradient), so ``weight_decay=0`` is plain Adam.  Parameters without a
    gradient in a step are left untouched and keep their step count.
    """

    def __init__(self, params: ModelParams, lr: float, weight_decay: float = 0.0, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = {k: 0 for k in params}

    def step(self) -> None:
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            self.t[name] += 1
            t = self.t[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1**t)
            v_hat = v / (1 - self.beta2**t)
            if self.weight_decay and not _no_decay(name):
                p.data -= self.lr * self.weight_decay * p.data
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class Checkpoint:
    params: ModelParams
    config: TrainConfig
    vocab: Vocab
    labels: LabelMap
    step: int = 0
    history: list = field(default_factory=list)
    losses: list = field(default_factory=list)

    def model(self, cfg: Optional[ModelConfig] = None) -> TucoreModel:
        return TucoreModel(cfg or self.config.model, self.vocab, self.labels, self.params, task=self.config.task)

    def to_bytes(self) -> bytes:
        sections = {
            "config": self.config.to_dict(),
            "vocab": list(self.vocab.tokens),
            "labels": [[label, rid] for label, rid in zip(self.labels.labels, self.labels.ids)],
            "step": self.step,
            "history": self.history,
            "losses": self.losses,
        }
        return ckpt_io.dumps(self.params.state(), sections)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Checkpoint":
        tensors, s = ckpt_io.loads(raw)
        params = ModelParams()
        for name, values in tensors.items():
            params.add(name, values)
        return cls(
            params=params,
            config=TrainConfig.from_dict(s["config"]),
            vocab=Vocab(s["vocab"]),
            labels=LabelMap((label, int(rid)) for label, rid in s["labels"]),
            step=int(s["step"]),
            history=list(s["history"]),
            losses=list(s["losses"]),
        )

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())


def canonical_key(inst: RelationInstance) -> str:
    return json.dumps(instance_to_record(inst), sort_keys=True, ensure_ascii=False)


def canonical_order(instances: Sequence[RelationInstance]) -> list[RelationInstance]:
    return sorted(instances, key=canonical_key)


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Seeded permutation cut into batches, each re-sorted to canonical order."""
    perm = rng.permutation(n)
    return [np.sort(perm[i : i + batch_size]) for i in range(0, n, batch_size)]


def apply_ablation(config: TrainConfig, *flags: str) -> TrainConfig:
    return replace(config, model=config.model.ablate(*flags))


def _complete_config(config: TrainConfig, vocab: Vocab, labels: LabelMap) -> TrainConfig:
    changes = {}
    if config.model.vocab_size != len(vocab):
        changes["vocab_size"] = len(vocab)
    if config.model.num_labels != len(labels):
        changes["num_labels"] = len(labels)
    return config.with_model(**changes) if changes else config


def dev_score(report: MetricsReport, task: str) -> float:
    return report.weighted_f1 if task == "erc" else report.f1


def train(
    config: TrainConfig,
    train_data: Sequence[RelationInstance],
    dev_data: Optional[Sequence[RelationInstance]] = None,
    vocab: Optional[Vocab] = None,
    labels: Optional[LabelMap] = None,
    on_step=None,
) -> Checkpoint:
    """Mini-batch training with per-epoch dev evaluation and best-dev retention.

    Everything random derives from ``config.seed``: initial weights, the
    per-epoch permutation and every dropout mask (one generator per step).
    """
    if not train_data:
        raise ValueError("training data is empty")
    data = canonical_order(train_data)
    vocab = vocab or Vocab.build(data)
    labels = labels or labels_in(list(data) + list(dev_data or []))
    config = _complete_config(config, vocab, labels)
    config.validate()

    model = TucoreModel(config.model, vocab, labels, task=config.task, seed=config.seed)
    examples = model.prepare(data)
    dev = canonical_order(dev_data) if dev_data else None
    opt = AdamW(model.params, config.learning_rate, config.weight_decay, (config.adam_beta1, config.adam_beta2), config.adam_eps)
    order_rng = np.random.default_rng([config.seed, 1])

    losses: list[float] = []
    history: list[dict] = []
    best_params, best_score = None, -math.inf
    step = 0
    done = False
    for epoch in range(config.epochs):
        epoch_losses = []
        for idx in epoch_batches(len(examples), config.batch_size, order_rng):
            rng = np.random.default_rng([config.seed, 2, step])
            model.params.zero_grad()
            try:
                with GradTape() as tape:
                    loss = model.loss([examples[i] for i in idx], train=True, rng=rng)
                value = float(loss.data)
                if not math.isfinite(value):
                    raise NumericalError("loss is not finite")
                tape.backward(loss)
            except NumericalError as exc:
                raise TrainingDiverged(f"training diverged at epoch {epoch}, step {step}: {exc}") from exc
            opt.step()
            losses.append(value)
            epoch_losses.append(value)
            step += 1
            if on_step is not None:
                on_step(step, value)
            if config.max_steps and step >= config.max_steps:
                done = True
                break
        entry = {"epoch": epoch, "step": step, "loss": float(np.mean(epoch_losses))}
        if dev:
            report = evaluate_model(model, dev, None)
            score = dev_score(report, config.task)
            entry["dev"] = score
            if score > best_score:
                best_score, best_params = score, model.params.clone()
        history.append(entry)
        log.info("epoch %d step %d %s", epoch, step, entry)
        if done:
            break
    if best_params is not None:
        model.params.assign(best_params)
    return Checkpoint(model.params, config, vocab, labels, step, history, losses)


def evaluate_model(model: TucoreModel, data: Sequence[RelationInstance], metrics: Optional[Sequence[str]] = None, excluded_label: str = "neutral") -> MetricsReport:
    if not data:
        raise ValueError("evaluation data is empty")
    unknown = {r for inst in data for r in inst.gold_relations} - set(model.labels.labels)
    if unknown:
        raise ValueError(f"label-space mismatch: {sorted(unknown)} not in the model's labels")
    golds = [inst.gold_relations for inst in data]
    preds = model.predict(data)
    if model.task == "erc":
        wanted = set(metrics or ERC_METRICS)
        report = score_weighted_f1(preds, golds)
        if "micro_f1_excl" in wanted:
            match = [label for label in model.labels.labels if label.lower() == excluded_label.lower()]
            report.micro_f1_excl = score_micro_f1_excl(preds, golds, match[0] if match else excluded_label)
        return report
    wanted = set(metrics or ("f1",))
    report = score_triples(preds, golds)
    if "f1c" in wanted:
        report.f1c = score_f1c(model.predict, data)
    return report


def evaluate(checkpoint: Checkpoint, data: Sequence[RelationInstance], metrics: Optional[Sequence[str]] = None) -> MetricsReport:
    """Dropout-free inference plus the task's metrics."""
    return evaluate_model(checkpoint.model(), data, metrics, checkpoint.config.excluded_label)
