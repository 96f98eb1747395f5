"""Command-line entry point: gen, train, eval, answer, heatmap."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import checkpoint as ckpt
from . import inference, synth, trainer
from .config import CONFIG_ENV_VAR, PRESET_NAMES, build_run_config
from .kb import load_triples
from .qa import QaSplit, Question, Vocabulary, load_qa, tokenize
from .model import ModeError, Mode


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV_VAR})")
    parser.add_argument("--preset", choices=PRESET_NAMES, default="desk",
                        help="base defaults before config/flag overrides")
    parser.add_argument("--seed", type=int, help="override every seeded stage")


def _collect_overrides(args, mapping: dict[str, tuple[str, str]]) -> dict[str, dict]:
    overrides: dict[str, dict] = {}
    for attr, (section, key) in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides.setdefault(section, {})[key] = value
    if getattr(args, "seed", None) is not None:
        overrides.setdefault("train", {})["seed"] = args.seed
        overrides.setdefault("synth", {})["seed"] = args.seed
    return overrides


def cmd_gen(args) -> int:
    overrides = _collect_overrides(args, {
        "entities": ("synth", "entities"),
        "relations": ("synth", "relations"),
        "types": ("synth", "types"),
        "facts_per_entity": ("synth", "facts_per_entity"),
        "templates": ("synth", "templates_per_relation"),
        "oov_fraction": ("synth", "oov_entity_fraction"),
    })
    cfg = build_run_config(args.preset, args.config, overrides)
    result = synth.generate(cfg.synth)
    checksums = synth.write_dataset(result, args.out_dir, overwrite=args.overwrite)
    for name in sorted(checksums):
        print(f"{name}\tsha256:{checksums[name]}")
    stats = result.stats
    print(f"facts={stats['facts']} questions={stats['questions']} "
          f"splits={stats['split_sizes']} "
          f"unseen_gold_entity_fraction={stats['unseen_gold_entity_fraction']:.3f}")
    return 0


def cmd_train(args) -> int:
    overrides = _collect_overrides(args, {
        "mode": ("train", "mode"),
        "epochs": ("train", "epochs"),
        "dim": ("train", "dim"),
        "k": ("train", "num_negatives"),
        "batch_size": ("train", "batch_size"),
        "lr": ("train", "learning_rate"),
        "margin": ("train", "margin"),
    })
    cfg = build_run_config(args.preset, args.config, overrides)
    store = load_triples(args.kb)
    data = trainer.prepare_data(store, args.train, args.valid, cfg.train)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if data.train.skipped:
        print(f"skipped {len(data.train.skipped)} training questions "
              f"(unresolvable topic or answers)", file=sys.stderr)

    def on_epoch(result: trainer.EpochResult) -> bool:
        (out_dir / f"ckpt_epoch_{result.epoch:03d}.bin").write_bytes(result.checkpoint)
        print(f"{result.metrics_line()}\tseconds={result.seconds:.2f}", flush=True)
        return True

    t0 = time.perf_counter()
    result = trainer.multitask_train(store, data, cfg.train, cfg.transe, on_epoch=on_epoch)
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    (out_dir / "metrics.log").write_text(
        "\n".join(result.metrics_lines()) + "\n", encoding="utf-8"
    )
    (out_dir / "best.bin").write_bytes(result.best.checkpoint)
    print(f"best_epoch={result.best.epoch} best_val_f1={result.best.val_f1:.6f} "
          f"total_seconds={time.perf_counter() - t0:.2f}")
    return 0


def _load_questions_for_eval(path, store, model) -> QaSplit:
    vocab = Vocabulary(words=list(model.word_vocab.words))
    return load_qa(path, store, vocab)


def cmd_eval(args) -> int:
    model, meta = ckpt.load(args.checkpoint)
    store = load_triples(args.kb)
    model.check_store(store)
    train_cfg = meta["config"]["train"]
    margin = args.margin if args.margin is not None else float(train_cfg["margin"])
    split = _load_questions_for_eval(args.questions, store, model)
    candidates = {
        q.id: store.candidate_set(q.topic, int(train_cfg["max_hops"]),
                                  str(train_cfg["type_relation"]),
                                  int(train_cfg["context_cap"]), q.id)
        for q in split.questions
    }
    result = inference.evaluate(split, candidates, model, store, margin)
    if args.report:
        inference.write_report(result, args.report)
    print(f"questions={len(result.rows)} skipped={len(split.skipped)}")
    print(f"averaged_f1 {result.mean_f1:.6f}")
    return 0


def _resolve_question(args, store, model) -> Question:
    topic = store.find_entity(args.topic)
    if topic is None:
        raise ValueError(f"unknown topic {args.topic!r}: not an entity of this knowledge base")
    question = Question(
        id="cli",
        text=args.question,
        token_ids=model.word_vocab.encode(tokenize(args.question)),
        topic=topic,
        gold_ids=frozenset(),
    )
    return question


def cmd_answer(args) -> int:
    model, meta = ckpt.load(args.checkpoint)
    store = load_triples(args.kb)
    model.check_store(store)
    train_cfg = meta["config"]["train"]
    margin = args.margin if args.margin is not None else float(train_cfg["margin"])
    question = _resolve_question(args, store, model)
    cands = store.candidate_set(question.topic, int(train_cfg["max_hops"]),
                                str(train_cfg["type_relation"]),
                                int(train_cfg["context_cap"]), question.id)
    if not cands.candidates:
        print("no candidates within reach of the topic entity")
        return 1
    ans = inference.answer(question, cands, model, margin)
    print(f"margin_cutoff={ans.s_max - margin:.6f} (answers above this line)")
    for res, score in ans.members:
        print(f"{res.surface}\t{score:.6f}")
    return 0


def cmd_heatmap(args) -> int:
    model, meta = ckpt.load(args.checkpoint)
    store = load_triples(args.kb)
    model.check_store(store)
    train_cfg = meta["config"]["train"]
    question = _resolve_question(args, store, model)
    cands = store.candidate_set(question.topic, int(train_cfg["max_hops"]),
                                str(train_cfg["type_relation"]),
                                int(train_cfg["context_cap"]), question.id)
    if not cands.candidates:
        print("no candidates within reach of the topic entity", file=sys.stderr)
        return 1
    if args.answer:
        matching = [c for c in cands.candidates if c.answer_entity.surface == args.answer]
        if not matching:
            print(f"error: {args.answer!r} is not a candidate for this topic", file=sys.stderr)
            return 1
    else:
        matching = cands.candidates
    encoded = model.encode(question.token_ids)
    best = max(matching, key=lambda c: float(model.score_candidate(encoded, c).data))
    hm = inference.heatmap(question, best, model)
    inference.write_heatmap_grid(hm, args.out_grid)
    inference.write_heatmap_svg(hm, args.out_svg)
    print(f"candidate={best.answer_entity.surface} grid={args.out_grid} svg={args.out_svg}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kbqa",
        description="Train and query a small attention-based KB question answerer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic KB and question splits")
    _add_common(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--overwrite", action="store_true")
    p.add_argument("--entities", type=int)
    p.add_argument("--relations", type=int)
    p.add_argument("--types", type=int)
    p.add_argument("--facts-per-entity", dest="facts_per_entity", type=int)
    p.add_argument("--templates", type=int)
    p.add_argument("--oov-fraction", dest="oov_fraction", type=float)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model and keep per-epoch checkpoints")
    _add_common(p)
    p.add_argument("--kb", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--epochs", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--k", type=int, help="negatives per positive")
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--margin", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="averaged F1 of a checkpoint on a question file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--kb", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--report", help="write a per-question TSV report here")
    p.add_argument("--margin", type=float, help="override the training margin")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("answer", help="answer one question with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--kb", required=True)
    p.add_argument("--question", required=True)
    p.add_argument("--topic", required=True)
    p.add_argument("--margin", type=float)
    p.set_defaults(func=cmd_answer)

    p = sub.add_parser("heatmap", help="emit attention heat map grid + SVG for one question")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--kb", required=True)
    p.add_argument("--question", required=True)
    p.add_argument("--topic", required=True)
    p.add_argument("--answer", help="candidate entity surface (default: best-scoring)")
    p.add_argument("--out-grid", required=True)
    p.add_argument("--out-svg", required=True)
    p.set_defaults(func=cmd_heatmap)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileExistsError, FileNotFoundError, ModeError,
            ckpt.CheckpointError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
