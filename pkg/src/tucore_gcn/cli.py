"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .config import ABLATIONS, PRESETS, TASKS, TrainConfig
from .corpus import DataError, LabelMap, erc_to_re, gen_synthetic, import_dialogre, labels_in, read_dataset, read_erc, summarize, write_dataset
from .corpus.synthetic import SynthConfig
from .encoding import Vocab
from .numerics import NumericalError, grad_check
from .training import Checkpoint, apply_ablation, evaluate, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("tucore_gcn")


class UsageError(Exception):
    pass


def _flags(raw: Optional[str]) -> list[str]:
    if not raw:
        return []
    flags = [f.strip() for f in raw.split(",") if f.strip()]
    bad = [f for f in flags if f not in ABLATIONS]
    if bad:
        raise UsageError(f"unknown ablation flag(s) {bad}; choose from {list(ABLATIONS)}")
    return flags


def _config(args) -> TrainConfig:
    if args.config:
        try:
            cfg = TrainConfig.load(args.config)
        except (OSError, ValueError, TypeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    else:
        cfg = PRESETS[args.preset]
    overrides = {}
    for name in ("seed", "task", "epochs", "max_steps", "batch_size", "learning_rate"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    cfg = replace(cfg, **overrides)
    flags = _flags(getattr(args, "ablate", None))
    return apply_ablation(cfg, *flags) if flags else cfg


def _read(path, labels: Optional[LabelMap] = None):
    try:
        return read_dataset(path, labels)
    except OSError as exc:
        raise DataError(str(exc)) from exc


def _metrics(raw: Optional[str]) -> Optional[list[str]]:
    return [m.strip() for m in raw.split(",") if m.strip()] if raw else None


def cmd_convert(args) -> int:
    conversations = read_erc(args.input)
    labels = None
    if args.labels:
        labels = LabelMap.load(args.labels)
    out = []
    for cid, utts in conversations:
        out.extend(erc_to_re(utts, labels, cid))
    write_dataset(args.output, out)
    print(f"wrote {len(out)} instances from {len(conversations)} conversations to {args.output}")
    return EXIT_OK


def cmd_import_dialogre(args) -> int:
    labels = LabelMap.load(args.labels) if args.labels else None
    instances = import_dialogre(args.input, labels)
    write_dataset(args.output, instances)
    stats = summarize(instances)
    print(json.dumps(stats.__dict__, sort_keys=True))
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = SynthConfig(num_instances=args.num)
    instances = gen_synthetic(cfg, args.seed or 0)
    write_dataset(args.output, instances)
    print(f"wrote {len(instances)} synthetic instances to {args.output}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    train_data = _read(args.train)
    dev_data = _read(args.dev) if args.dev else None
    ck = train(cfg, train_data, dev_data, on_step=lambda s, v: log.info("step %d loss %.6f", s, v))
    ck.save(args.output)
    print(f"trained {ck.step} steps, final loss {ck.losses[-1]:.6f}; checkpoint written to {args.output}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ck = Checkpoint.load(args.checkpoint)
    data = _read(args.data)
    report = evaluate(ck, data, _metrics(args.metrics))
    text = {"kv": report.to_kv, "text": report.to_text, "json": report.to_json}[args.format]()
    sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return EXIT_OK


def cmd_predict(args) -> int:
    ck = Checkpoint.load(args.checkpoint)
    data = _read(args.data)
    model = ck.model()
    probs = model.probabilities(data)
    preds = model.predict(data)
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        for inst, row, pred in zip(data, probs, preds):
            rec = {
                "dialogue_id": inst.dialogue_id,
                "subject": inst.subject,
                "object": inst.object,
                "predicted": sorted(pred),
                "scores": {label: float(p) for label, p in zip(model.labels.labels, row)},
            }
            out.write(json.dumps(rec, sort_keys=True) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .model import TucoreModel

    cfg = _config(args)
    data = _read(args.data) if args.data else gen_synthetic(SynthConfig(num_instances=4), cfg.seed)
    data = data[: args.instances]
    vocab, labels = Vocab.build(data), labels_in(data)
    model_cfg = replace(cfg.model, vocab_size=len(vocab), num_labels=len(labels)).deterministic()
    model = TucoreModel(model_cfg, vocab, labels, task=cfg.task, seed=cfg.seed)
    examples = model.prepare(data)
    report = grad_check(lambda: model.loss(examples), model.params, samples=args.samples, eps=args.eps, seed=cfg.seed, floor=args.floor)
    for family, err in sorted(report.by_family().items()):
        print(f"{family:<12} {err:.3e}")
    worst = report.max_rel_error
    print(f"max relative error {worst:.3e} over {len(report)} samples (tolerance {args.tol:g})")
    return EXIT_OK if worst < args.tol else EXIT_NUMERIC


def cmd_export_graph(args) -> int:
    from .model import TucoreModel

    data = _read(args.data)
    if not 0 <= args.index < len(data):
        raise UsageError(f"--index must be in [0, {len(data)})")
    inst = data[args.index]
    cfg = _config(args).model
    vocab = Vocab.build(data)
    model = TucoreModel(replace(cfg, vocab_size=len(vocab), num_labels=max(1, len(labels_in(data)))), vocab, labels_in(data), seed=0)
    ex = model.example(inst)
    payload = {"dialogue_id": inst.dialogue_id, "subject": inst.subject, "object": inst.object, **ex.graph.to_dict()}
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tucore-gcn", description="Dialogue relation extraction with turn-aware graph reasoning.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p, training: bool = False):
        p.add_argument("--config", help="JSON training config")
        p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
        p.add_argument("--seed", type=int)
        p.add_argument("--task", choices=TASKS)
        p.add_argument("--ablate", help=f"comma-separated subset of {','.join(ABLATIONS)}")
        if training:
            p.add_argument("--epochs", type=int)
            p.add_argument("--max-steps", dest="max_steps", type=int)
            p.add_argument("--batch-size", dest="batch_size", type=int)
            p.add_argument("--lr", dest="learning_rate", type=float)

    p = sub.add_parser("convert", help="ERC conversations to relation instances")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--labels", help="emotion label map")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("import-dialogre", help="DialogRE JSON to canonical JSONL")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--labels", help="relation label map (label<TAB>id)")
    p.set_defaults(func=cmd_import_dialogre)

    p = sub.add_parser("synth", help="write a planted-rule synthetic dataset")
    p.add_argument("output")
    p.add_argument("--num", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train")
    p.add_argument("train")
    p.add_argument("--dev")
    p.add_argument("-o", "--output", default="model.ckpt")
    with_config(p, training=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval")
    p.add_argument("checkpoint")
    p.add_argument("data")
    p.add_argument("--metrics", help="comma-separated: f1,f1c (dialog_re) or weighted_f1,micro_f1_excl (erc)")
    p.add_argument("--format", choices=("kv", "text", "json"), default="kv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict")
    p.add_argument("checkpoint")
    p.add_argument("data")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    p.add_argument("--data")
    p.add_argument("--instances", type=int, default=4)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--floor", type=float, default=1e-6)
    p.add_argument("--tol", type=float, default=1e-4)
    with_config(p)
    p.set_defaults(func=cmd_gradcheck, preset="tiny")

    p = sub.add_parser("export-graph", help="print the dialogue graph of one instance")
    p.add_argument("data")
    p.add_argument("--index", type=int, default=0)
    with_config(p)
    p.set_defaults(func=cmd_export_graph)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, KeyError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
