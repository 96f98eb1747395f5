"""QA ingestion, tokenization, vocabulary closure, negative sampling."""

import json

import numpy as np
import pytest

from kbqa.kb import load_triples
from kbqa.qa import (
    Vocabulary,
    load_qa,
    make_training_examples,
    read_qa_records,
    tokenize,
)


@pytest.fixture
def store(tmp_path):
    lines = [
        "a\tr1\tb", "a\tr1\tc", "a\tr2\td", "a\tr2\th",
        "e\tr1\tf", "e\tr2\tg", "b\tr2\te", "h\tr1\ti",
    ]
    path = tmp_path / "kb.tsv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return load_triples(path)


def write_qa(tmp_path, records, name="qa.jsonl"):
    path = tmp_path / name
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


class TestTokenize:
    def test_lowercase_and_punctuation(self):
        assert tokenize("Who is the president of France?") == \
            ["who", "is", "the", "president", "of", "france"]

    def test_empty_text_encodes_to_unk(self):
        vocab = Vocabulary.build([["who"]])
        assert vocab.encode(tokenize("")) == [0]
        assert vocab.encode(tokenize("?!...")) == [0]

    def test_unseen_word_maps_to_unk(self):
        vocab = Vocabulary.build([["who", "is"]])
        assert vocab.encode(["who", "zebra"]) == [vocab.encode(["who"])[0], 0]

    def test_vocab_ids_are_dense(self):
        vocab = Vocabulary.build([["b", "a"], ["c", "a"]])
        ids = vocab.encode(["a", "b", "c"])
        assert sorted(ids) == ids == [1, 2, 3]
        assert len(vocab) == 4  # + unk


class TestLoadQa:
    def test_happy_path(self, tmp_path, store):
        path = write_qa(tmp_path, [{"question": "who x", "topic": "a", "answers": ["b"]}])
        vocab = Vocabulary.build([["who", "x"]])
        split = load_qa(path, store, vocab)
        assert len(split.questions) == 1
        q = split.questions[0]
        assert q.topic.surface == "a"
        assert {store.resources[i].surface for i in q.gold_ids} == {"b"}

    def test_unknown_topic_skipped_and_counted(self, tmp_path, store):
        path = write_qa(tmp_path, [{"question": "who x", "topic": "nowhere", "answers": ["b"]}])
        split = load_qa(path, store, Vocabulary())
        assert len(split.questions) == 0
        assert len(split.skipped) == 1

    def test_partial_answer_resolution(self, tmp_path, store):
        path = write_qa(tmp_path, [
            {"question": "who x", "topic": "a", "answers": ["b", "unknown-thing"]},
        ])
        split = load_qa(path, store, Vocabulary())
        assert len(split.questions) == 1
        assert len(split.questions[0].gold_ids) == 1
        assert split.dropped_answers == 1

    def test_missing_field_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"question": "who", "topic": "a"}\n', encoding="utf-8")
        with pytest.raises(ValueError, match="answers"):
            read_qa_records(path)

    def test_invalid_json_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"question": "ok", "topic": "a", "answers": []}\n{oops\n',
                        encoding="utf-8")
        with pytest.raises(ValueError, match="line 2"):
            read_qa_records(path)


def _question_and_candidates(store, tmp_path, topic="a", answers=("b",)):
    path = write_qa(tmp_path, [{"question": "who r1 x", "topic": topic,
                                "answers": list(answers)}])
    vocab = Vocabulary.build([["who", "r1", "x"]])
    split = load_qa(path, store, vocab)
    q = split.questions[0]
    cands = store.candidate_set(q.topic, 2, question_id=q.id)
    return q, cands


class TestMakeTrainingExamples:
    def test_counts(self, store, tmp_path):
        q, cands = _question_and_candidates(store, tmp_path, answers=("b", "c"))
        positives = [c for c in cands.candidates if c.answer_entity.id in q.gold_ids]
        examples = make_training_examples(q, cands, k=3, seed=1)
        assert len(examples) == len(positives)
        for ex in examples:
            assert len(ex.negatives) == 3
            assert len({n.key() for n in ex.negatives}) == 3

    def test_negatives_never_gold(self, store, tmp_path):
        q, cands = _question_and_candidates(store, tmp_path, answers=("b", "c", "d"))
        for seed in range(20):
            for ex in make_training_examples(q, cands, k=4, seed=seed):
                assert all(n.answer_entity.id not in q.gold_ids for n in ex.negatives)

    def test_seed_determinism(self, store, tmp_path):
        q, cands = _question_and_candidates(store, tmp_path)
        a = make_training_examples(q, cands, k=5, seed=123)
        b = make_training_examples(q, cands, k=5, seed=123)
        assert [(e.positive.key(), [n.key() for n in e.negatives]) for e in a] == \
               [(e.positive.key(), [n.key() for n in e.negatives]) for e in b]
        c = make_training_examples(q, cands, k=5, seed=124)
        assert a != c or [n.key() for n in a[0].negatives] == [n.key() for n in c[0].negatives]

    def test_pool_extension_local_first(self, store, tmp_path):
        q, cands = _question_and_candidates(store, tmp_path, answers=("b",))
        local_keys = {c.key() for c in cands.candidates if c.answer_entity.id not in q.gold_ids}
        # shrink the local pool to force foreign draws
        cands.candidates = [c for c in cands.candidates
                            if c.answer_entity.id in q.gold_ids or c.key() in list(local_keys)[:1]]
        other = store.candidate_set(store.find_entity("e"), 2, question_id="other")
        examples = make_training_examples(q, cands, k=3, seed=5, pool=[other])
        assert len(examples[0].negatives) == 3
        keys = [n.key() for n in examples[0].negatives]
        assert keys[0] in local_keys  # the single local negative comes first
        foreign_keys = {c.key() for c in other.candidates}
        assert all(k in foreign_keys for k in keys[1:])

    def test_empty_positives_yield_nothing(self, store, tmp_path):
        q, cands = _question_and_candidates(store, tmp_path, answers=("g",))
        # g is not within two hops of a, so no candidate matches the gold set
        assert [c for c in cands.candidates if c.answer_entity.id in q.gold_ids] == []
        assert make_training_examples(q, cands, k=3, seed=0) == []

    def test_exhausted_pool_allows_repeats(self, store, tmp_path):
        q, cands = _question_and_candidates(store, tmp_path, answers=("b",))
        keep = [c for c in cands.candidates if c.answer_entity.id in q.gold_ids]
        non_gold = [c for c in cands.candidates if c.answer_entity.id not in q.gold_ids]
        cands.candidates = keep + non_gold[:1]
        examples = make_training_examples(q, cands, k=4, seed=9, pool=[])
        assert len(examples[0].negatives) == 4  # repeats fill the shortfall

    def test_k_must_be_positive(self, store, tmp_path):
        q, cands = _question_and_candidates(store, tmp_path)
        with pytest.raises(ValueError):
            make_training_examples(q, cands, k=0, seed=0)

    def test_id_ranges(self, store, tmp_path):
        q, cands = _question_and_candidates(store, tmp_path)
        vocab_size = store.vocab_size
        for ex in make_training_examples(q, cands, k=3, seed=2):
            for cand in [ex.positive, *ex.negatives]:
                assert cand.answer_entity.id < vocab_size
                assert all(r.id < vocab_size for r in cand.relation_path)
