"""Pairwise margin training interleaved with graph-embedding phases.

Each epoch flattens the sampled examples into (question, positive, negative)
triples, shuffles them across questions, and runs SGD over mini-batches; every
triple's hinge loss is weighted by 1 over its question's positive count, so
the epoch objective is the weighted sum the model minimizes. In the modes
that use global KB information, every QA epoch is followed by a fixed number
of graph-embedding epochs on the shared KB table. Negatives are re-sampled
each epoch from an epoch-dependent seed.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autograd as ag
from . import checkpoint as ckpt
from .inference import evaluate
from .kb import CandidateSet, KbStore
from .model import Mode, Model
from .qa import (
    QaSplit,
    TrainingExample,
    Vocabulary,
    load_qa,
    make_training_examples,
    read_qa_records,
    tokenize,
)
from .transe import TransEConfig, filter_facts, transe_epoch


@dataclass
class TrainConfig:
    mode: str = "bilstm-att-gki"
    dim: int = 128
    learning_rate: float = 0.01
    batch_size: int = 50
    margin: float = 0.6
    num_negatives: int = 500
    epochs: int = 30
    seed: int = 0
    max_hops: int = 2
    context_cap: int = 64
    type_relation: str = "type"
    normalize_after_epoch: bool = True

    def validate(self) -> None:
        Mode.from_string(self.mode)
        if self.dim <= 0 or self.dim % 2 != 0:
            raise ValueError(f"dim must be positive and even, got {self.dim}")
        if self.margin <= 0:
            raise ValueError(f"margin must be positive, got {self.margin}")
        if min(self.learning_rate, self.batch_size, self.num_negatives, self.epochs) <= 0:
            raise ValueError("learning rate, batch size, negatives and epochs must be positive")
        if self.max_hops not in (1, 2):
            raise ValueError(f"max_hops must be 1 or 2, got {self.max_hops}")
        if self.context_cap < 1:
            raise ValueError(f"context_cap must be positive, got {self.context_cap}")


def paper_train_config(**overrides) -> TrainConfig:
    """Full-scale defaults."""
    return replace(TrainConfig(), **overrides)


def desk_train_config(**overrides) -> TrainConfig:
    """Small-model defaults sized for minutes-long runs."""
    return replace(TrainConfig(dim=16, num_negatives=20, batch_size=16), **overrides)


def pair_loss(score_pos: float, score_neg: float, margin: float) -> float:
    """Hinge between a positive and a negative score."""
    if margin <= 0:
        raise ValueError(f"pair_loss: margin must be positive, got {margin}")
    return max(0.0, margin + score_neg - score_pos)


@dataclass
class TrainData:
    """Everything an experiment needs besides the store: vocab, splits, candidates."""

    vocab: Vocabulary
    train: QaSplit
    valid: QaSplit
    candidates: dict[str, CandidateSet]


def prepare_data(store: KbStore, train_path, valid_path, config: TrainConfig) -> TrainData:
    """Build the word vocabulary from the training split and resolve both splits."""
    train_records = read_qa_records(train_path)
    vocab = Vocabulary.build([tokenize(str(r["question"])) for r in train_records])
    train = load_qa(train_path, store, vocab)
    valid = load_qa(valid_path, store, vocab)
    candidates = {}
    for q in train.questions + valid.questions:
        candidates[q.id] = store.candidate_set(
            q.topic, config.max_hops, config.type_relation, config.context_cap, q.id
        )
    return TrainData(vocab=vocab, train=train, valid=valid, candidates=candidates)


def sample_epoch_examples(data: TrainData, config: TrainConfig, epoch: int) -> list[TrainingExample]:
    """Deterministic per-epoch example sampling for every training question."""
    pool = [data.candidates[q.id] for q in data.train.questions]
    examples: list[TrainingExample] = []
    for qi, q in enumerate(data.train.questions):
        examples.extend(
            make_training_examples(
                q,
                data.candidates[q.id],
                config.num_negatives,
                seed=[config.seed, 1, epoch, qi],
                pool=pool,
            )
        )
    return examples


def _weights_by_question(examples: list[TrainingExample]) -> dict[str, float]:
    counts: dict[str, int] = {}
    for ex in examples:
        counts[ex.question.id] = counts.get(ex.question.id, 0) + 1
    return {qid: 1.0 / n for qid, n in counts.items()}


def qa_epoch(examples: list[TrainingExample], model: Model, config: TrainConfig,
             rng: np.random.Generator) -> float:
    """One shuffled pass of mini-batch SGD; returns the running epoch objective."""
    if not examples:
        raise ValueError("qa_epoch: no training examples")
    weights = _weights_by_question(examples)
    triples = [(ex, neg) for ex in examples for neg in ex.negatives]
    order = rng.permutation(len(triples))
    params = model.parameters()
    total = 0.0
    for start in range(0, len(order), config.batch_size):
        batch = order[start:start + config.batch_size]
        with ag.Tape() as tape:
            encodings: dict[str, object] = {}
            scores: dict[tuple, ag.Tensor] = {}
            terms = []
            for idx in batch:
                ex, neg = triples[idx]
                qid = ex.question.id
                encoded = encodings.get(qid)
                if encoded is None:
                    encoded = model.encode(ex.question.token_ids)
                    encodings[qid] = encoded
                term_scores = []
                for cand in (ex.positive, neg):
                    key = (qid, id(cand))
                    s = scores.get(key)
                    if s is None:
                        s = model.score_candidate(encoded, cand)
                        scores[key] = s
                    term_scores.append(s)
                terms.append(ag.margin_hinge(term_scores[0], term_scores[1],
                                             config.margin, weights[qid]))
            loss = terms[0] if len(terms) == 1 else ag.add_n(*terms)
            grads = ag.backward(tape, loss, params)
        ag.sgd_step(params, grads, config.learning_rate)
        total += float(loss.data)
    if config.normalize_after_epoch:
        model.normalize_tables()
    return total


def epoch_objective(examples: list[TrainingExample], model: Model, margin: float) -> float:
    """The epoch objective evaluated at the current parameters, no updates."""
    weights = _weights_by_question(examples)
    total = 0.0
    for ex in examples:
        encoded = model.encode(ex.question.token_ids)
        s_pos = float(model.score_candidate(encoded, ex.positive).data)
        for neg in ex.negatives:
            s_neg = float(model.score_candidate(encoded, neg).data)
            total += weights[ex.question.id] * pair_loss(s_pos, s_neg, margin)
    return total


@dataclass
class EpochResult:
    epoch: int
    objective: float
    val_f1: float
    transe_loss: float | None
    seconds: float
    checkpoint: bytes

    def metrics_line(self) -> str:
        """Deterministic log line (wall-clock time deliberately excluded)."""
        line = f"epoch={self.epoch}\tobjective={self.objective:.6f}\tval_f1={self.val_f1:.6f}"
        if self.transe_loss is not None:
            line += f"\ttranse_loss={self.transe_loss:.6f}"
        return line


@dataclass
class TrainResult:
    epochs: list[EpochResult]
    best_index: int
    model: Model
    transe_epochs_run: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def best(self) -> EpochResult:
        return self.epochs[self.best_index]

    def metrics_lines(self) -> list[str]:
        return [e.metrics_line() for e in self.epochs]


def multitask_train(store: KbStore, data: TrainData, config: TrainConfig,
                    transe_config: TransEConfig | None = None,
                    on_epoch=None) -> TrainResult:
    """Alternate QA epochs with graph-embedding phases on the shared KB table.

    Emits a checkpoint per epoch (epoch 0 is the untrained baseline) and keeps
    the best by validation F1. ``on_epoch`` may return False to stop early.
    """
    config.validate()
    mode = Mode.from_string(config.mode)
    transe_config = transe_config or TransEConfig()
    transe_config.validate()
    if not data.train.questions:
        raise ValueError("multitask_train: training split is empty")
    model = Model.build(mode, config.dim, data.vocab, store, seed=[config.seed, 0])
    echo = {"train": asdict(config), "transe": asdict(transe_config)}
    warnings: list[str] = []
    fact_set = None
    if mode.uses_gki:
        fact_set = filter_facts(store, data.train.questions)
        if not fact_set.facts:
            warnings.append("graph-embedding phase skipped: filtered fact set is empty")
            fact_set = None

    def snapshot(epoch: int, objective: float, transe_loss: float | None, seconds: float) -> EpochResult:
        val = evaluate(data.valid, data.candidates, model, store, config.margin)
        return EpochResult(
            epoch=epoch,
            objective=objective,
            val_f1=val.mean_f1,
            transe_loss=transe_loss,
            seconds=seconds,
            checkpoint=ckpt.save_bytes(model, epoch, echo),
        )

    t0 = time.perf_counter()
    baseline = sample_epoch_examples(data, config, epoch=0)
    results = [snapshot(0, epoch_objective(baseline, model, config.margin), None,
                        time.perf_counter() - t0)]
    if on_epoch is not None:
        on_epoch(results[0])
    transe_epochs_run = 0
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        examples = sample_epoch_examples(data, config, epoch)
        rng = np.random.default_rng([config.seed, 2, epoch])
        objective = qa_epoch(examples, model, config, rng)
        transe_loss = None
        if fact_set is not None:
            rng_t = np.random.default_rng([config.seed, 3, epoch])
            losses = []
            for _ in range(transe_config.epochs_per_qa_epoch):
                losses.append(transe_epoch(fact_set, model.kb_table, store, transe_config, rng_t))
                transe_epochs_run += 1
            transe_loss = float(np.mean(losses)) if losses else None
        results.append(snapshot(epoch, objective, transe_loss, time.perf_counter() - t0))
        if on_epoch is not None and on_epoch(results[-1]) is False:
            break
    best_index = 0
    for i, res in enumerate(results):
        if res.val_f1 > results[best_index].val_f1:
            best_index = i
    return TrainResult(
        epochs=results,
        best_index=best_index,
        model=model,
        transe_epochs_run=transe_epochs_run,
        warnings=warnings,
    )
