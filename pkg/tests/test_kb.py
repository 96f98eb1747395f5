"""Triple store: loading, candidate expansion, aspect extraction."""

import numpy as np
import pytest

from kbqa.kb import ENTITY, RELATION, KbStore, ResourceId, load_triples

from oracles import bfs_candidates


def store_from(lines, tmp_path):
    path = tmp_path / "kb.tsv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return load_triples(path)


class TestLoadTriples:
    def test_single_fact(self, tmp_path):
        store = store_from(["france\tcapital\tparis"], tmp_path)
        assert len(store.facts) == 1
        # 3 resources from the file plus the two sentinels
        assert store.vocab_size == 5
        assert store.find_entity("france").kind == ENTITY
        assert store.find_relation("capital").kind == RELATION

    def test_duplicate_line_collapses(self, tmp_path):
        store = store_from(["a\tr\tb", "a\tr\tb"], tmp_path)
        assert len(store.facts) == 1

    def test_malformed_line_names_line_number(self, tmp_path):
        with pytest.raises(ValueError, match="line 1"):
            store_from(["a\tb"], tmp_path)

    def test_empty_file_is_valid_empty_store(self, tmp_path):
        path = tmp_path / "kb.tsv"
        path.write_text("", encoding="utf-8")
        store = load_triples(path)
        assert len(store.facts) == 0
        assert store.vocab_size == 2  # sentinels only

    def test_comments_and_blanks_skipped(self, tmp_path):
        store = store_from(["# header", "", "a\tr\tb"], tmp_path)
        assert len(store.facts) == 1

    def test_empty_field_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="line 1"):
            store_from(["a\t\tb"], tmp_path)

    def test_ids_dense_and_unique(self, tmp_path):
        store = store_from(["a\tr\tb", "b\ts\tc"], tmp_path)
        ids = [r.id for r in store.resources]
        assert ids == list(range(store.vocab_size))


class TestCandidateSet:
    def test_two_hop_chain(self, tmp_path):
        store = store_from(["a\tr1\tb", "b\tr2\tc"], tmp_path)
        cands = store.candidate_set(store.find_entity("a"), max_hops=2)
        got = {(c.answer_entity.surface, tuple(r.surface for r in c.relation_path))
               for c in cands.candidates}
        assert ("b", ("r1",)) in got
        assert ("c", ("r1", "r2")) in got

    def test_reverse_direction(self, tmp_path):
        store = store_from(["a\tr1\tb"], tmp_path)
        cands = store.candidate_set(store.find_entity("b"), max_hops=1)
        got = {(c.answer_entity.surface, tuple(r.surface for r in c.relation_path))
               for c in cands.candidates}
        assert got == {("a", ("r1",))}

    def test_isolated_topic_empty(self, tmp_path):
        # the topic's only fact is a self-loop, which never yields candidates
        store = store_from(["a\tr\tb", "lone\tr\tlone"], tmp_path)
        cs = store.candidate_set(store.find_entity("lone"), max_hops=2)
        assert cs.candidates == []
        assert not cs.unknown_topic

    def test_unknown_topic_flagged(self, tmp_path):
        store = store_from(["a\tr\tb"], tmp_path)
        foreign = ResourceId(999, ENTITY, "ghost")
        cands = store.candidate_set(foreign)
        assert cands.unknown_topic
        assert cands.candidates == []

    def test_topic_never_a_candidate(self, tmp_path):
        store = store_from(["a\tr1\tb", "b\tr2\ta"], tmp_path)
        cands = store.candidate_set(store.find_entity("a"), max_hops=2)
        assert all(c.answer_entity.surface != "a" for c in cands.candidates)

    def test_no_duplicate_entity_path_pairs(self, tmp_path):
        store = store_from(["a\tr\tb", "b\tr\ta", "b\tr2\tc", "c\tr2\tb"], tmp_path)
        cands = store.candidate_set(store.find_entity("a"), max_hops=2)
        keys = [c.key() for c in cands.candidates]
        assert len(keys) == len(set(keys))

    def test_matches_bfs_oracle_on_random_kbs(self, tmp_path):
        rng = np.random.default_rng(42)
        for round_no in range(100):
            n_entities = int(rng.integers(3, 25))
            n_relations = int(rng.integers(1, 6))
            n_facts = int(rng.integers(1, 200))
            facts = set()
            for _ in range(n_facts):
                s = int(rng.integers(0, n_entities))
                o = int(rng.integers(0, n_entities))
                r = int(rng.integers(0, n_relations))
                facts.add((f"e{s}", f"r{r}", f"e{o}"))
            lines = [f"{s}\t{r}\t{o}" for s, r, o in sorted(facts)]
            store = store_from(lines, tmp_path)
            topic_surface = f"e{int(rng.integers(0, n_entities))}"
            topic = store.find_entity(topic_surface)
            max_hops = int(rng.integers(1, 3))
            if topic is None:
                continue
            got = {
                (c.answer_entity.surface, tuple(r.surface for r in c.relation_path))
                for c in store.candidate_set(topic, max_hops).candidates
            }
            expected = bfs_candidates(sorted(facts), topic_surface, max_hops)
            assert got == expected, f"round {round_no}: mismatch for topic {topic_surface}"

    def test_every_path_replays_to_its_entity(self, tmp_path):
        rng = np.random.default_rng(7)
        facts = set()
        for _ in range(60):
            facts.add((f"e{rng.integers(0, 12)}", f"r{rng.integers(0, 4)}", f"e{rng.integers(0, 12)}"))
        store = store_from([f"{s}\t{r}\t{o}" for s, r, o in sorted(facts)], tmp_path)
        topic = store.find_entity("e0")
        if topic is None:
            pytest.skip("random KB missing the probe entity")
        for cand in store.candidate_set(topic, 2).candidates:
            assert store.path_reaches(topic, cand.relation_path, cand.answer_entity)


class TestAspects:
    def test_types_and_context(self, tmp_path):
        store = store_from(["x\ttype\tcountry", "x\tborders\ty", "t\tr\tx"], tmp_path)
        cand = store.aspects_of(store.find_entity("x"), (store.find_relation("r"),),
                                topic=store.find_entity("t"))
        assert [t.surface for t in cand.types] == ["country"]
        # context: everything sharing a fact with x, minus topic and x itself
        assert {c.surface for c in cand.context} == {"country", "y"}

    def test_missing_type_gets_sentinel(self, tmp_path):
        store = store_from(["x\tr\ty"], tmp_path)
        cand = store.aspects_of(store.find_entity("x"), (store.find_relation("r"),),
                                topic=store.find_entity("y"))
        assert cand.types == (store.no_type,)

    def test_only_topic_connection_gets_context_sentinel(self, tmp_path):
        store = store_from(["t\tr\tx"], tmp_path)
        cand = store.aspects_of(store.find_entity("x"), (store.find_relation("r"),),
                                topic=store.find_entity("t"))
        assert cand.context == (store.no_context,)
        assert cand.answer_entity not in cand.context

    def test_deterministic_and_capped(self, tmp_path):
        lines = [f"x\tr\te{i}" for i in range(10)] + ["t\tq\tx"]
        store = store_from(lines, tmp_path)
        topic = store.find_entity("t")
        a = store.aspects_of(store.find_entity("x"), (), topic, context_cap=4)
        b = store.aspects_of(store.find_entity("x"), (), topic, context_cap=4)
        assert a.context == b.context
        assert len(a.context) == 4
        ids = [c.id for c in a.context]
        assert ids == sorted(ids)

    def test_candidate_invariants_on_random_store(self, tmp_path):
        rng = np.random.default_rng(13)
        facts = {(f"e{rng.integers(0, 10)}", f"r{rng.integers(0, 3)}", f"e{rng.integers(0, 10)}")
                 for _ in range(50)}
        store = store_from([f"{s}\t{r}\t{o}" for s, r, o in sorted(facts)], tmp_path)
        topic = store.find_entity("e1")
        for cand in store.candidate_set(topic, 2).candidates:
            assert 1 <= len(cand.relation_path) <= 2
            assert cand.answer_entity not in cand.context
            assert all(r.kind == RELATION for r in cand.relation_path)
            for ctx in cand.context:
                if ctx is store.no_context:
                    continue
                shared = any(
                    ctx.id in (f.subject.id, f.object.id)
                    for f in store.facts_touching(cand.answer_entity.id)
                )
                assert shared
