"""Question/answer ingestion, word vocabulary, and pairwise example sampling."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kb import CandidateAnswer, CandidateSet, KbStore, ResourceId

UNK = "<unk>"
_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation, discarding the punctuation."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Vocabulary:
    """Closed word vocabulary; id 0 is the shared unknown-word slot."""

    words: list[str] = field(default_factory=lambda: [UNK])
    _ids: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self._ids:
            self._ids = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    def add(self, word: str) -> int:
        found = self._ids.get(word)
        if found is not None:
            return found
        self.words.append(word)
        self._ids[word] = len(self.words) - 1
        return len(self.words) - 1

    def encode(self, tokens: list[str]) -> list[int]:
        """Map tokens to ids; empty input degrades to a single unknown token."""
        if not tokens:
            return [0]
        return [self._ids.get(t, 0) for t in tokens]

    @classmethod
    def build(cls, token_lists) -> "Vocabulary":
        """Vocabulary over the given token lists, sorted for determinism."""
        vocab = cls()
        for w in sorted({t for toks in token_lists for t in toks}):
            vocab.add(w)
        return vocab


@dataclass
class Question:
    id: str
    text: str
    token_ids: list[int]
    topic: ResourceId
    gold_ids: frozenset[int]


@dataclass
class QaSplit:
    """Loaded questions plus bookkeeping about records that could not resolve."""

    questions: list[Question]
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (id, reason)
    dropped_answers: int = 0

    def __len__(self) -> int:
        return len(self.questions)


@dataclass
class TrainingExample:
    question: Question
    positive: CandidateAnswer
    negatives: list[CandidateAnswer]


def read_qa_records(source: str | Path) -> list[dict]:
    """Parse a JSON-lines QA file with fields question/topic/answers."""
    records = []
    path = Path(source)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as err:
                raise ValueError(f"{path.name}: line {lineno}: invalid record: {err}") from None
            for fld in ("question", "topic", "answers"):
                if fld not in rec:
                    raise ValueError(f"{path.name}: line {lineno}: missing field {fld!r}")
            rec.setdefault("id", f"q{lineno:05d}")
            records.append(rec)
    return records


def load_qa(source: str | Path, store: KbStore, vocab: Vocabulary) -> QaSplit:
    """Resolve a QA file against the store vocabulary.

    Questions whose topic entity is unknown are skipped (and counted); gold
    answers that do not resolve are dropped with a count, and a question left
    with no resolvable gold answer is skipped as well.
    """
    split = QaSplit(questions=[])
    for rec in read_qa_records(source):
        qid = str(rec["id"])
        topic = store.find_entity(str(rec["topic"]))
        if topic is None:
            split.skipped.append((qid, f"unknown topic {rec['topic']!r}"))
            continue
        gold = []
        for surface in rec["answers"]:
            res = store.find_entity(str(surface))
            if res is None:
                split.dropped_answers += 1
            else:
                gold.append(res.id)
        if not gold:
            split.skipped.append((qid, "no resolvable gold answers"))
            continue
        text = str(rec["question"])
        split.questions.append(
            Question(
                id=qid,
                text=text,
                token_ids=vocab.encode(tokenize(text)),
                topic=topic,
                gold_ids=frozenset(gold),
            )
        )
    return split


def make_training_examples(
    question: Question,
    cands: CandidateSet,
    k: int,
    seed,
    pool: list[CandidateSet] | None = None,
) -> list[TrainingExample]:
    """One example per positive candidate, each with ``k`` sampled negatives.

    Positives are the candidates whose entity is a gold answer. Negatives are
    drawn uniformly without replacement from this question's non-gold
    candidates; shortfall is filled from the other candidate sets in ``pool``
    (again excluding this question's gold entities), and only if the combined
    supply is still short of ``k`` are repeats allowed. Deterministic for a
    given seed.
    """
    if k < 1:
        raise ValueError(f"make_training_examples: k must be >= 1, got {k}")
    rng = np.random.default_rng(seed)
    positives = [c for c in cands.candidates if c.answer_entity.id in question.gold_ids]
    if not positives:
        return []
    local = [c for c in cands.candidates if c.answer_entity.id not in question.gold_ids]
    foreign: list[CandidateAnswer] = []
    if len(local) < k and pool:
        seen = {c.key() for c in local}
        for other in pool:
            if other.question_id == cands.question_id:
                continue
            for c in other.candidates:
                if c.answer_entity.id in question.gold_ids or c.key() in seen:
                    continue
                seen.add(c.key())
                foreign.append(c)
    examples = []
    for pos in positives:
        negatives = list(local) if len(local) <= k else [
            local[i] for i in rng.choice(len(local), size=k, replace=False)
        ]
        short = k - len(negatives)
        if short > 0 and foreign:
            if short >= len(foreign):
                negatives.extend(foreign)
            else:
                negatives.extend(foreign[i] for i in rng.choice(len(foreign), size=short, replace=False))
        short = k - len(negatives)
        if short > 0 and negatives:
            # supply exhausted: top up with repeats
            negatives.extend(negatives[i] for i in rng.integers(0, len(negatives), size=short))
        examples.append(TrainingExample(question=question, positive=pos, negatives=negatives))
    return examples
