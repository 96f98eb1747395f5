"""Deterministic toy KB and question generator.

The generated task is small enough to train in minutes yet structured enough
to need all four answer aspects. Every subject carries one *paired* relation:
two facts through the same relation whose objects differ only in type, so the
question's wh-word (which maps one-to-one to the asked answer type) is the
only cue separating the two gold candidates; the relation phrase mid-sentence
is the only cue separating 1-hop answers from 2-hop lookalikes. Questions are
templated as ``<wh-word> <relation phrase> <topic>``, where the relation
phrase is three tokens with the discriminative one in the middle, placing the
informative tokens away from the sentence ends.

A configurable share of entities is reserved as out-of-vocabulary answers:
every question holding one of them as gold lands in the test split, so those
entities are never positives during training. A repair pass then swaps
questions between splits until no *other* test or validation gold is unseen
in training, keeping the out-of-vocabulary rate at its configured level
instead of at the mercy of the shuffle.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

WH_WORDS = ("who", "where", "when", "what", "which", "whom", "whose", "how")
PHRASE_PRE = ("does", "is", "was", "has", "can")
PHRASE_POST = ("connect", "linked", "joined", "related", "bound")
TYPE_RELATION = "type"


@dataclass
class SynthConfig:
    entities: int = 50  # includes the type-marker entities
    relations: int = 6  # includes the type relation
    types: int = 4
    facts_per_entity: int = 3  # content facts per subject; the first two are the typed pair
    templates_per_relation: int = 2
    train_fraction: float = 0.6
    valid_fraction: float = 0.2
    test_fraction: float = 0.2
    oov_entity_fraction: float = 0.04
    seed: int = 0

    def validate(self) -> None:
        fractions = self.train_fraction + self.valid_fraction + self.test_fraction
        if abs(fractions - 1.0) > 1e-9 or min(
            self.train_fraction, self.valid_fraction, self.test_fraction
        ) <= 0:
            raise ValueError(
                f"split fractions must be positive and sum to 1, got "
                f"{self.train_fraction}/{self.valid_fraction}/{self.test_fraction}"
            )
        if min(self.entities, self.relations, self.types,
               self.facts_per_entity, self.templates_per_relation) < 1:
            raise ValueError("all generator counts must be positive")
        if self.relations < 2:
            raise ValueError("need at least one content relation besides the type relation")
        if self.types > len(WH_WORDS):
            raise ValueError(f"at most {len(WH_WORDS)} answer types are supported (one wh-word each)")
        if self.facts_per_entity < 2:
            raise ValueError("need at least two facts per entity to pair both answer types")
        if self.templates_per_relation > len(PHRASE_PRE):
            raise ValueError(f"at most {len(PHRASE_PRE)} templates per relation are supported")
        if self.entities < 3 * self.types:
            raise ValueError(
                f"{self.entities} entities cannot support {self.types} types; "
                "every type needs its marker plus at least two member entities"
            )
        if not 0.0 <= self.oov_entity_fraction < 1.0:
            raise ValueError(f"oov_entity_fraction must be in [0, 1), got {self.oov_entity_fraction}")


@dataclass
class SynthResult:
    kb_lines: list[str]
    splits: dict[str, list[dict]]  # split name -> QA records
    stats: dict = field(default_factory=dict)


def _phrase(relation_index: int, template: int) -> str:
    return f"{PHRASE_PRE[template]} rel{relation_index}v{template} {PHRASE_POST[template]}"


def generate(config: SynthConfig) -> SynthResult:
    """Build the KB and the three question splits, fully determined by the seed."""
    config.validate()
    rng = np.random.default_rng([config.seed, 11])
    n_types = config.types
    n_content = config.relations - 1
    n_regular = config.entities - n_types

    type_markers = [f"typ{t}" for t in range(n_types)]
    entities = [f"ent{i:03d}" for i in range(n_regular)]
    relations = [f"rel{j}" for j in range(n_content)]
    entity_type = [i % n_types for i in range(n_regular)]
    by_type: list[list[str]] = [[] for _ in range(n_types)]
    for surface, t in zip(entities, entity_type):
        by_type[t].append(surface)
    # each relation draws objects from two adjacent types
    relation_types = [(j % n_types, (j + 1) % n_types) for j in range(n_content)]

    facts: list[tuple[str, str, str]] = []
    fact_set: set[tuple[str, str, str]] = set()

    def add_fact(s: str, r: str, o: str) -> bool:
        if (s, r, o) in fact_set:
            return False
        fact_set.add((s, r, o))
        facts.append((s, r, o))
        return True

    def random_object(subject: str, type_index: int) -> str | None:
        pool = [e for e in by_type[type_index] if e != subject]
        return pool[int(rng.integers(0, len(pool)))] if pool else None

    for surface, t in zip(entities, entity_type):
        add_fact(surface, TYPE_RELATION, type_markers[t])
    for idx, surface in enumerate(entities):
        # the typed pair: one object of each of the relation's two types
        j = idx % n_content
        for asked in relation_types[j]:
            obj = random_object(surface, asked)
            if obj is not None:
                add_fact(surface, relations[j], obj)
        made, attempts = 2, 0
        while made < config.facts_per_entity and attempts < config.facts_per_entity * 20:
            attempts += 1
            j2 = int(rng.integers(0, n_content))
            asked = relation_types[j2][int(rng.integers(0, 2))]
            obj = random_object(surface, asked)
            if obj is not None and add_fact(surface, relations[j2], obj):
                made += 1

    # questions: one per (topic, relation, answer type, template)
    rel_index = {r: j for j, r in enumerate(relations)}
    type_of = dict(zip(entities, entity_type))
    groups: dict[tuple[str, int, int], list[str]] = {}
    for s, r, o in facts:
        if r == TYPE_RELATION:
            continue
        groups.setdefault((s, rel_index[r], type_of[o]), []).append(o)
    questions = []
    for (s, j, t), objs in sorted(groups.items()):
        for template in range(config.templates_per_relation):
            questions.append({
                "question": f"{WH_WORDS[t]} {_phrase(j, template)} {s}",
                "topic": s,
                "answers": sorted(set(objs)),
            })
    for i, q in enumerate(questions):
        q["id"] = f"q{i:04d}"

    # out-of-vocabulary answers: all their questions go to the test split
    n_oov = round(config.oov_entity_fraction * n_regular)
    oov_entities = set()
    if n_oov:
        picks = rng.choice(n_regular, size=n_oov, replace=False)
        oov_entities = {entities[i] for i in sorted(picks)}
    forced = [q for q in questions if oov_entities & set(q["answers"])]
    rest = [q for q in questions if not (oov_entities & set(q["answers"]))]
    rest = [rest[i] for i in rng.permutation(len(rest))]

    n_total = len(questions)
    n_test = round(config.test_fraction * n_total)
    n_valid = round(config.valid_fraction * n_total)
    fill = max(0, n_test - len(forced))
    test = forced + rest[:fill]
    remaining = rest[fill:]
    valid = remaining[:n_valid]
    train = remaining[n_valid:]
    if not train or not valid or not test:
        raise ValueError(
            f"config yields an empty split (train={len(train)}, valid={len(valid)}, "
            f"test={len(test)}); increase entities or facts_per_entity"
        )
    _repair_incidental_oov(train, valid, test, oov_entities)

    train_gold = {a for q in train for a in q["answers"]}
    test_gold = {a for q in test for a in q["answers"]}
    unseen_gold = test_gold - train_gold
    unseen_questions = [q for q in test if set(q["answers"]) - train_gold]
    kb_lines = [f"{s}\t{r}\t{o}" for s, r, o in facts]
    stats = {
        "entities": n_regular + n_types,
        "relations": n_content + 1,
        "facts": len(facts),
        "questions": n_total,
        "split_sizes": {"train": len(train), "valid": len(valid), "test": len(test)},
        "oov_entities": len(oov_entities),
        "unseen_gold_entity_fraction": (len(unseen_gold) / len(test_gold)) if test_gold else 0.0,
        "unseen_gold_question_fraction": len(unseen_questions) / len(test) if test else 0.0,
    }
    return SynthResult(
        kb_lines=kb_lines,
        splits={"train": train, "valid": valid, "test": test},
        stats=stats,
    )


def _repair_incidental_oov(train: list[dict], valid: list[dict], test: list[dict],
                           oov_entities: set[str]) -> None:
    """Swap questions between splits until only the designated entities are unseen.

    An entity that is gold only in held-out questions (by shuffle accident,
    not by designation) gets one of its questions promoted into train; a train
    question whose golds all stay covered is demoted in exchange, keeping the
    split sizes intact. Deterministic: candidates are scanned in stored order.
    """
    for _ in range(len(valid) + len(test)):
        train_gold: dict[str, int] = {}
        for q in train:
            for a in q["answers"]:
                train_gold[a] = train_gold.get(a, 0) + 1
        swapped = False
        for split in (valid, test):
            for qi, q in enumerate(split):
                unseen = [a for a in q["answers"]
                          if a not in train_gold and a not in oov_entities]
                if not unseen:
                    continue
                for ti, tq in enumerate(train):
                    safe = all(train_gold.get(a, 0) >= 2 for a in tq["answers"])
                    if safe and not (oov_entities & set(tq["answers"])):
                        split[qi], train[ti] = train[ti], split[qi]
                        swapped = True
                        break
                if swapped:
                    break
            if swapped:
                break
        if not swapped:
            return


def write_dataset(result: SynthResult, out_dir: str | Path,
                  overwrite: bool = False) -> dict[str, str]:
    """Emit kb.tsv plus one JSON-lines file per split; returns sha256 per file."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payloads = {"kb.tsv": "\n".join(result.kb_lines) + "\n"}
    for name, records in result.splits.items():
        payloads[f"{name}.jsonl"] = "".join(
            json.dumps(rec, sort_keys=True) + "\n" for rec in records
        )
    for name in payloads:
        target = out / name
        if target.exists() and not overwrite:
            raise FileExistsError(f"{target} already exists; pass overwrite to replace it")
    checksums = {}
    for name, payload in payloads.items():
        data = payload.encode("utf-8")
        (out / name).write_bytes(data)
        checksums[name] = hashlib.sha256(data).hexdigest()
    return checksums
