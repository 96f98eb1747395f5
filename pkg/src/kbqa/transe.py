"""Translation-based graph embedding training on the shared KB table.

Facts are modelled as subject + relation ~ object; the energy of a triple is
the squared Euclidean length of the residual. Training minimizes a margin
hinge between each true fact and a corrupted copy (head or tail swapped for a
random entity), by SGD on the same embedding table the scorer reads, so each
phase of this training directly moves the answer-side representations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .kb import Fact, KbStore
from .qa import Question


@dataclass
class TransEConfig:
    margin: float = 1.0
    epochs_per_qa_epoch: int = 100
    batch_size: int = 50
    learning_rate: float = 0.01
    normalize_entities: bool = True

    def validate(self) -> None:
        if self.margin <= 0:
            raise ValueError(f"graph-embedding margin must be positive, got {self.margin}")
        if self.epochs_per_qa_epoch < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("graph-embedding epochs, batch size and learning rate must be positive")


@dataclass
class FilteredFactSet:
    """Facts whose participants touch the questions' 2-hop neighborhoods."""

    facts: list[Fact]
    entity_ids: frozenset[int] = field(default_factory=frozenset)

    def __len__(self) -> int:
        return len(self.facts)


def energy(s: np.ndarray, p: np.ndarray, o: np.ndarray) -> float:
    """Squared Euclidean norm of s + p - o."""
    residual = np.asarray(s, dtype=np.float64) + np.asarray(p, dtype=np.float64) - np.asarray(o, dtype=np.float64)
    return float(residual @ residual)


def filter_facts(store: KbStore, questions: list[Question]) -> FilteredFactSet:
    """Facts worth embedding for these questions.

    Seed the entity set with every topic entity, expand it twice along facts
    in both directions, and keep each fact in which any expanded entity
    appears.
    """
    frontier = sorted({q.topic.id for q in questions})
    expanded = set(frontier)
    for _ in range(2):
        nxt = []
        for eid in frontier:
            for _, other in store.neighbors(eid):
                if other.id not in expanded:
                    expanded.add(other.id)
                    nxt.append(other.id)
        frontier = nxt
    facts = [
        f for f in store.facts
        if f.subject.id in expanded or f.object.id in expanded
    ]
    return FilteredFactSet(facts=facts, entity_ids=frozenset(expanded))


def corrupt(fact: Fact, rng: np.random.Generator, entity_pool: list,
            store: KbStore, max_redraws: int = 100) -> Fact:
    """Swap the head or the tail for a random entity.

    Redraws while the corrupted triple happens to be a true fact; after
    ``max_redraws`` attempts the last (unfiltered) corruption is returned.
    """
    if not entity_pool:
        raise ValueError("corrupt: entity pool is empty")
    corrupted = fact
    for _ in range(max_redraws):
        replace_head = bool(rng.integers(0, 2))
        entity = entity_pool[int(rng.integers(0, len(entity_pool)))]
        if replace_head:
            corrupted = Fact(entity, fact.relation, fact.object)
        else:
            corrupted = Fact(fact.subject, fact.relation, entity)
        if not store.has_fact_key(corrupted.key()):
            return corrupted
    return corrupted


def transe_epoch(fact_set: FilteredFactSet, table: Tensor, store: KbStore,
                 config: TransEConfig, rng: np.random.Generator) -> float:
    """One shuffled pass over the facts; returns the mean hinge loss.

    Each mini-batch runs one SGD step on the shared table; entity rows are
    re-normalized to unit length afterwards (relations are left free).
    """
    if not fact_set.facts:
        raise ValueError("transe_epoch: fact set is empty")
    entity_pool = [store.resources[i] for i in store.entity_ids()]
    order = rng.permutation(len(fact_set.facts))
    total = 0.0
    for start in range(0, len(order), config.batch_size):
        batch = [fact_set.facts[i] for i in order[start:start + config.batch_size]]
        corrupted = [corrupt(f, rng, entity_pool, store) for f in batch]
        s_ids = [f.subject.id for f in batch]
        p_ids = [f.relation.id for f in batch]
        o_ids = [f.object.id for f in batch]
        cs_ids = [f.subject.id for f in corrupted]
        co_ids = [f.object.id for f in corrupted]
        with ag.Tape() as tape:
            s = ag.take_rows(table, s_ids)
            p = ag.take_rows(table, p_ids)
            o = ag.take_rows(table, o_ids)
            cs = ag.take_rows(table, cs_ids)
            co = ag.take_rows(table, co_ids)
            pos_res = ag.sub(ag.add(s, p), o)
            neg_res = ag.sub(ag.add(cs, p), co)
            pos_energy = ag.sum_cols(ag.mul(pos_res, pos_res))
            neg_energy = ag.sum_cols(ag.mul(neg_res, neg_res))
            hinge = ag.relu(ag.add_const(ag.sub(pos_energy, neg_energy), config.margin))
            loss = ag.mean_all(hinge)
            grads = ag.backward(tape, loss, [table])
        ag.sgd_step([table], grads, config.learning_rate)
        total += float(loss.data) * len(batch)
    if config.normalize_entities:
        ids = store.entity_ids()
        rows = table.data[ids]
        norms = np.sqrt((rows * rows).sum(axis=1, keepdims=True))
        table.data[ids] = rows / np.where(norms == 0.0, 1.0, norms)
    return total / len(fact_set.facts)
