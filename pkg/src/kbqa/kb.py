"""In-memory triple store: loading, neighborhood expansion, answer aspects.

The store is immutable after loading and safe for concurrent reads. Entities
and relations share one dense id space; two sentinel entities (``<no_type>``
and ``<no_context>``) occupy the first ids so that every candidate always has
a non-empty type and context list to embed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

ENTITY = "entity"
RELATION = "relation"

NO_TYPE_SURFACE = "<no_type>"
NO_CONTEXT_SURFACE = "<no_context>"


@dataclass(frozen=True)
class ResourceId:
    """One vocabulary item of the knowledge base."""

    id: int
    kind: str  # ENTITY or RELATION
    surface: str


@dataclass(frozen=True)
class Fact:
    subject: ResourceId
    relation: ResourceId
    object: ResourceId

    def key(self) -> tuple[int, int, int]:
        return (self.subject.id, self.relation.id, self.object.id)


@dataclass(frozen=True)
class CandidateAnswer:
    """An answer entity with its four scoring aspects.

    ``relation_path`` holds the 1 or 2 relations walked from the topic entity;
    ``types`` and ``context`` fall back to the sentinels when empty.
    """

    answer_entity: ResourceId
    relation_path: tuple[ResourceId, ...]
    types: tuple[ResourceId, ...]
    context: tuple[ResourceId, ...]

    def key(self) -> tuple:
        return (self.answer_entity.id, tuple(r.id for r in self.relation_path))


@dataclass
class CandidateSet:
    question_id: str
    candidates: list[CandidateAnswer]
    unknown_topic: bool = False


@dataclass
class KbStore:
    """Triple store with subject/object indexes and a shared resource vocabulary."""

    resources: list[ResourceId] = field(default_factory=list)
    facts: list[Fact] = field(default_factory=list)
    _by_surface: dict[tuple[str, str], ResourceId] = field(default_factory=dict)
    _fact_keys: set[tuple[int, int, int]] = field(default_factory=set)
    _by_subject: dict[int, list[Fact]] = field(default_factory=dict)
    _by_object: dict[int, list[Fact]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.resources:
            self._intern(ENTITY, NO_TYPE_SURFACE)
            self._intern(ENTITY, NO_CONTEXT_SURFACE)

    # -- vocabulary ---------------------------------------------------------

    def _intern(self, kind: str, surface: str) -> ResourceId:
        found = self._by_surface.get((kind, surface))
        if found is not None:
            return found
        res = ResourceId(len(self.resources), kind, surface)
        self.resources.append(res)
        self._by_surface[(kind, surface)] = res
        return res

    @property
    def vocab_size(self) -> int:
        return len(self.resources)

    @property
    def no_type(self) -> ResourceId:
        return self.resources[0]

    @property
    def no_context(self) -> ResourceId:
        return self.resources[1]

    def find_entity(self, surface: str) -> ResourceId | None:
        return self._by_surface.get((ENTITY, surface))

    def find_relation(self, surface: str) -> ResourceId | None:
        return self._by_surface.get((RELATION, surface))

    def entity_ids(self) -> list[int]:
        """Ids of all non-sentinel entities, ascending."""
        return [r.id for r in self.resources[2:] if r.kind == ENTITY]

    def contains(self, res: ResourceId) -> bool:
        return res.id < len(self.resources) and self.resources[res.id] is res

    def has_fact_key(self, key: tuple[int, int, int]) -> bool:
        return key in self._fact_keys

    # -- loading ------------------------------------------------------------

    def _add_fact(self, subject: str, relation: str, obj: str) -> None:
        s = self._intern(ENTITY, subject)
        r = self._intern(RELATION, relation)
        o = self._intern(ENTITY, obj)
        fact = Fact(s, r, o)
        if fact.key() in self._fact_keys:
            return
        self._fact_keys.add(fact.key())
        self.facts.append(fact)
        self._by_subject.setdefault(s.id, []).append(fact)
        self._by_object.setdefault(o.id, []).append(fact)

    # -- traversal ----------------------------------------------------------

    def facts_touching(self, entity_id: int) -> list[Fact]:
        """Facts where the entity is subject or object, in load order."""
        out = list(self._by_subject.get(entity_id, ()))
        for f in self._by_object.get(entity_id, ()):
            if f.subject.id != f.object.id:  # self-loops already counted once
                out.append(f)
        return out

    def neighbors(self, entity_id: int) -> list[tuple[ResourceId, ResourceId]]:
        """(relation, other endpoint) pairs reachable through one fact."""
        out = []
        for f in self._by_subject.get(entity_id, ()):
            out.append((f.relation, f.object))
        for f in self._by_object.get(entity_id, ()):
            if f.subject.id == f.object.id:
                continue
            out.append((f.relation, f.subject))
        return out

    def candidate_set(
        self,
        topic: ResourceId,
        max_hops: int = 2,
        type_relation: str = "type",
        context_cap: int = 64,
        question_id: str = "",
    ) -> CandidateSet:
        """All entities within ``max_hops`` facts of the topic, with aspects.

        Traversal follows facts in both directions. A candidate is one
        (entity, relation path) pair, so an entity reachable along several
        paths appears once per distinct path. The topic itself is excluded.
        """
        if max_hops not in (1, 2):
            raise ValueError(f"candidate_set: max_hops must be 1 or 2, got {max_hops}")
        if not self.contains(topic) or topic.kind != ENTITY:
            return CandidateSet(question_id, [], unknown_topic=True)
        reached: list[tuple[ResourceId, tuple[ResourceId, ...]]] = []
        seen: set[tuple] = set()
        first_hop = []
        for rel, other in self.neighbors(topic.id):
            if other.id == topic.id:
                continue
            key = (other.id, (rel.id,))
            if key not in seen:
                seen.add(key)
                reached.append((other, (rel,)))
                first_hop.append((other, rel))
        if max_hops == 2:
            for mid, rel1 in first_hop:
                for rel2, other in self.neighbors(mid.id):
                    if other.id == topic.id:
                        continue
                    key = (other.id, (rel1.id, rel2.id))
                    if key not in seen:
                        seen.add(key)
                        reached.append((other, (rel1, rel2)))
        candidates = [
            self.aspects_of(entity, path, topic, type_relation, context_cap)
            for entity, path in reached
        ]
        return CandidateSet(question_id, candidates)

    def aspects_of(
        self,
        entity: ResourceId,
        relation_path: tuple[ResourceId, ...],
        topic: ResourceId,
        type_relation: str = "type",
        context_cap: int = 64,
    ) -> CandidateAnswer:
        """Assemble the four aspects for one answer entity.

        Types are the objects of the entity's facts through the configured
        type relation; context is every other entity sharing a fact with it,
        minus the topic and the entity itself, kept deterministic by ascending
        id and truncated to ``context_cap``.
        """
        type_rel = self.find_relation(type_relation)
        types = []
        if type_rel is not None:
            for f in self._by_subject.get(entity.id, ()):
                if f.relation.id == type_rel.id:
                    types.append(f.object)
        types.sort(key=lambda r: r.id)
        context_ids: set[int] = set()
        for f in self.facts_touching(entity.id):
            for end in (f.subject, f.object):
                if end.id not in (entity.id, topic.id):
                    context_ids.add(end.id)
        context = [self.resources[i] for i in sorted(context_ids)[:context_cap]]
        return CandidateAnswer(
            answer_entity=entity,
            relation_path=tuple(relation_path),
            types=tuple(types) if types else (self.no_type,),
            context=tuple(context) if context else (self.no_context,),
        )

    def path_reaches(self, topic: ResourceId, path: tuple[ResourceId, ...], target: ResourceId) -> bool:
        """Replay a relation path from the topic; True if it can land on target."""
        frontier = {topic.id}
        for rel in path:
            nxt = set()
            for eid in frontier:
                for r, other in self.neighbors(eid):
                    if r.id == rel.id:
                        nxt.add(other.id)
            frontier = nxt
        return target.id in frontier


def load_triples(source: str | Path) -> KbStore:
    """Read a tab-separated triple file into a store.

    Lines are ``subject<TAB>relation<TAB>object``; ``#`` starts a comment and
    blank lines are ignored. Duplicate triples collapse to one fact.
    """
    store = KbStore()
    path = Path(source)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(p.strip() for p in parts):
                raise ValueError(
                    f"{path.name}: line {lineno}: expected 3 non-empty tab-separated "
                    f"fields, got {len(parts)}"
                )
            store._add_fact(parts[0].strip(), parts[1].strip(), parts[2].strip())
    return store
