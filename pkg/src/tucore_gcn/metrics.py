"""Scoring: micro F1 over triples, F1 on dialogue prefixes, weighted F1 and micro F1 without one class."""

from __future__ import annotations

import json
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Optional, Sequence

from .corpus.types import RelationInstance
from .graph import mentions


def _safe_div(a: float, b: float) -> float:
    return a / b if b else 0.0


def _f1(p: float, r: float) -> float:
    return _safe_div(2 * p * r, p + r)


@dataclass
class MetricsReport:
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    f1c: Optional[float] = None
    weighted_f1: Optional[float] = None
    micro_f1_excl: Optional[float] = None
    accuracy: Optional[float] = None
    per_class: dict = field(default_factory=dict)
    count: int = 0

    def aggregates(self) -> dict:
        keys = ("precision", "recall", "f1", "f1c", "weighted_f1", "micro_f1_excl", "accuracy")
        return {k: getattr(self, k) for k in keys if getattr(self, k) is not None}

    def to_kv(self) -> str:
        lines = [f"{k}={v:.6f}" for k, v in self.aggregates().items()]
        lines.append(f"count={self.count}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        rows = [f"{'label':<28} {'prec':>7} {'rec':>7} {'f1':>7} {'support':>8}"]
        for label in sorted(self.per_class, key=str):
            c = self.per_class[label]
            rows.append(f"{str(label):<28} {c['precision']:7.4f} {c['recall']:7.4f} {c['f1']:7.4f} {c['support']:8d}")
        rows.append("")
        rows += [f"{k:<14} {v:.4f}" for k, v in self.aggregates().items()]
        rows.append(f"{'count':<14} {self.count}")
        return "\n".join(rows) + "\n"

    def to_json(self) -> str:
        return json.dumps({**self.aggregates(), "count": self.count, "per_class": self.per_class}, indent=2, sort_keys=True)


def _per_class(tp: Counter, fp: Counter, fn: Counter, support: Counter) -> dict:
    out = {}
    for label in set(tp) | set(fp) | set(fn) | set(support):
        p = _safe_div(tp[label], tp[label] + fp[label])
        r = _safe_div(tp[label], tp[label] + fn[label])
        out[label] = {"precision": p, "recall": r, "f1": _f1(p, r), "support": int(support[label])}
    return out


def score_triples(preds: Sequence[Iterable[Hashable]], golds: Sequence[Iterable[Hashable]]) -> MetricsReport:
    """Micro precision / recall / F1 over (instance, relation) pairs."""
    if len(preds) != len(golds):
        raise ValueError(f"misaligned lists: {len(preds)} predictions vs {len(golds)} golds")
    tp, fp, fn, support = Counter(), Counter(), Counter(), Counter()
    for pred, gold in zip(preds, golds):
        pred, gold = set(pred), set(gold)
        for r in pred & gold:
            tp[r] += 1
        for r in pred - gold:
            fp[r] += 1
        for r in gold - pred:
            fn[r] += 1
        for r in gold:
            support[r] += 1
    t, f_p, f_n = sum(tp.values()), sum(fp.values()), sum(fn.values())
    p = _safe_div(t, t + f_p)
    r = _safe_div(t, t + f_n)
    return MetricsReport(precision=p, recall=r, f1=_f1(p, r), per_class=_per_class(tp, fp, fn, support), count=len(golds))


def default_prefix_rule(inst: RelationInstance) -> int:
    """Shortest whole-turn prefix in which both arguments have been mentioned.

    Falls back to the full dialogue when no such prefix exists.
    """
    seen_subject = seen_object = False
    for m, turn in enumerate(inst.dialogue.turns, 1):
        seen_subject = seen_subject or mentions(inst.subject, turn)
        seen_object = seen_object or mentions(inst.object, turn)
        if seen_subject and seen_object:
            return m
    return len(inst.dialogue)


def prefix_instances(instances: Sequence[RelationInstance], prefix_rule: Callable[[RelationInstance], int] = default_prefix_rule) -> list[RelationInstance]:
    cache: dict = {}
    out = []
    for inst in instances:
        m = prefix_rule(inst)
        key = (id(inst.dialogue), m)
        if key not in cache:
            cache[key] = inst.dialogue.prefix(m)
        out.append(inst.with_dialogue(cache[key]))
    return out


def score_f1c(
    predict: Callable[[Sequence[RelationInstance]], Sequence[Iterable[Hashable]]],
    instances: Sequence[RelationInstance],
    prefix_rule: Callable[[RelationInstance], int] = default_prefix_rule,
) -> float:
    """F1 of ``predict`` re-run on the dialogue prefix chosen by ``prefix_rule``."""
    truncated = prefix_instances(instances, prefix_rule)
    preds = predict(truncated)
    return score_triples(preds, [inst.gold_relations for inst in instances]).f1


def _single(labels: Sequence) -> list:
    out = []
    for x in labels:
        if isinstance(x, (set, frozenset, list, tuple)):
            if len(x) != 1:
                raise ValueError("single-label metric received a multi-label entry")
            x = next(iter(x))
        out.append(x)
    return out


def _confusion_counts(preds, golds):
    tp, fp, fn, support = Counter(), Counter(), Counter(), Counter()
    for p, g in zip(preds, golds):
        support[g] += 1
        if p == g:
            tp[g] += 1
        else:
            fp[p] += 1
            fn[g] += 1
    return tp, fp, fn, support


def score_weighted_f1(preds: Sequence, golds: Sequence) -> MetricsReport:
    """Support-weighted mean of per-class F1 for single-label predictions."""
    preds, golds = _single(preds), _single(golds)
    if len(preds) != len(golds):
        raise ValueError("misaligned lists")
    tp, fp, fn, support = _confusion_counts(preds, golds)
    per_class = _per_class(tp, fp, fn, support)
    total = len(golds)
    weighted = _safe_div(sum(c["f1"] * c["support"] for c in per_class.values()), total)
    acc = _safe_div(sum(tp.values()), total)
    return MetricsReport(weighted_f1=weighted, accuracy=acc, per_class=per_class, count=total, precision=acc, recall=acc, f1=acc)


def score_micro_f1_excl(preds: Sequence, golds: Sequence, excluded_label) -> float:
    """Micro F1 over every class except ``excluded_label``.

    Predicting the excluded class is never a true or false positive, but
    still a false negative for the gold class it missed.
    """
    preds, golds = _single(preds), _single(golds)
    if len(preds) != len(golds):
        raise ValueError("misaligned lists")
    tp = fp = fn = 0
    for p, g in zip(preds, golds):
        if p == g:
            if g != excluded_label:
                tp += 1
            continue
        if p != excluded_label:
            fp += 1
        if g != excluded_label:
            fn += 1
    if tp + fp == 0 or tp + fn == 0:
        if tp + fn == 0:
            warnings.warn(f"no gold labels outside {excluded_label!r}; micro-F1 reported as 0", stacklevel=2)
        return 0.0
    p, r = tp / (tp + fp), tp / (tp + fn)
    return _f1(p, r)


def inverse_groups(instances: Sequence[RelationInstance]) -> dict[str, list[int]]:
    """Partition instance indices by how their relations behave under argument swap.

    An instance whose swapped pair (same dialogue) shares a relation with it
    is ``symmetric``; one whose swapped pair exists with disjoint relations is
    ``asymmetric``; the rest are ``other``.
    """
    index = {}
    for k, inst in enumerate(instances):
        index[(inst.dialogue_id, inst.dialogue.turns, inst.subject, inst.object)] = k
    groups: dict[str, list[int]] = {"asymmetric": [], "symmetric": [], "other": []}
    for k, inst in enumerate(instances):
        j = index.get((inst.dialogue_id, inst.dialogue.turns, inst.object, inst.subject))
        if j is None or j == k:
            groups["other"].append(k)
        elif inst.gold_relations & instances[j].gold_relations:
            groups["symmetric"].append(k)
        else:
            groups["asymmetric"].append(k)
    return groups
