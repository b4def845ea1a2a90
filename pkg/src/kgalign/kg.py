"""Domain model: knowledge graphs, the merged input graph, alignment pair sets.

Entities and relations are dense integers starting at 0; string names live in
side tables owned by the ingest layer. All types here are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

from .errors import StructuralError
from .rng import derive_rng

Triple = tuple[int, int, int]
Pair = tuple[int, int]


@dataclass(frozen=True)
class KnowledgeGraph:
    """One input graph: dense entity/relation id spaces plus its triple list."""

    label: str
    num_entities: int
    num_relations: int
    triples: tuple[Triple, ...]

    def __post_init__(self):
        if self.num_entities < 0 or self.num_relations < 0:
            raise ValueError("entity and relation counts must be non-negative")
        seen = set()
        for h, r, t in self.triples:
            if not (0 <= h < self.num_entities and 0 <= t < self.num_entities):
                raise StructuralError(f"{self.label}: triple ({h},{r},{t}) references unknown entity")
            if not (0 <= r < self.num_relations):
                raise StructuralError(f"{self.label}: triple ({h},{r},{t}) references unknown relation")
            if (h, r, t) in seen:
                raise StructuralError(f"{self.label}: duplicate triple ({h},{r},{t})")
            seen.add((h, r, t))


@dataclass(frozen=True)
class MergedGraph:
    """Both graphs re-indexed into one global id space.

    G1 entities occupy global ids [0, n1), G2 entities [n1, n); relations are
    offset the same way. `triples` holds every triple of both graphs in
    global ids.
    """

    g1: KnowledgeGraph
    g2: KnowledgeGraph
    triples: tuple[Triple, ...] = field(repr=False)

    @property
    def num_entities(self) -> int:
        return self.g1.num_entities + self.g2.num_entities

    @property
    def num_relations(self) -> int:
        return self.g1.num_relations + self.g2.num_relations

    @property
    def entity_offset(self) -> int:
        """First global entity id belonging to G2."""
        return self.g1.num_entities

    @property
    def relation_offset(self) -> int:
        return self.g1.num_relations

    def entity_side(self, gid: int) -> str:
        if not 0 <= gid < self.num_entities:
            raise ValueError(f"entity id {gid} out of range [0, {self.num_entities})")
        return "G1" if gid < self.entity_offset else "G2"

    def relation_side(self, rid: int) -> str:
        if not 0 <= rid < self.num_relations:
            raise ValueError(f"relation id {rid} out of range [0, {self.num_relations})")
        return "G1" if rid < self.relation_offset else "G2"

    def entity_to_global(self, label: str, local_id: int) -> int:
        g, off = (self.g1, 0) if label == "G1" else (self.g2, self.entity_offset)
        if not 0 <= local_id < g.num_entities:
            raise ValueError(f"{label}: entity id {local_id} out of range")
        return local_id + off

    def relation_to_global(self, label: str, local_id: int) -> int:
        g, off = (self.g1, 0) if label == "G1" else (self.g2, self.relation_offset)
        if not 0 <= local_id < g.num_relations:
            raise ValueError(f"{label}: relation id {local_id} out of range")
        return local_id + off

    def project(self) -> tuple[KnowledgeGraph, KnowledgeGraph]:
        """Recover the two original graphs (round-trip inverse of merge_graphs)."""
        ne1, nr1 = self.g1.num_entities, self.g1.num_relations
        t1, t2 = [], []
        for h, r, t in self.triples:
            if h < ne1:
                t1.append((h, r, t))
            else:
                t2.append((h - ne1, r - nr1, t - ne1))
        g1 = KnowledgeGraph(self.g1.label, ne1, nr1, tuple(t1))
        g2 = KnowledgeGraph(self.g2.label, self.g2.num_entities, self.g2.num_relations, tuple(t2))
        return g1, g2

    @cached_property
    def _incident(self) -> tuple[tuple[int, ...], ...]:
        by_entity: list[set[int]] = [set() for _ in range(self.num_entities)]
        for h, r, t in self.triples:
            by_entity[h].add(r)
            by_entity[t].add(r)
        return tuple(tuple(sorted(s)) for s in by_entity)

    @cached_property
    def _endpoints(self) -> tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]:
        heads: list[set[int]] = [set() for _ in range(self.num_relations)]
        tails: list[set[int]] = [set() for _ in range(self.num_relations)]
        for h, r, t in self.triples:
            heads[r].add(h)
            tails[r].add(t)
        return tuple((tuple(sorted(hs)), tuple(sorted(ts))) for hs, ts in zip(heads, tails))

    @cached_property
    def neighbor_entities(self) -> tuple[tuple[int, ...], ...]:
        """Distinct entities sharing a triple with each entity, either direction."""
        nbr: list[set[int]] = [set() for _ in range(self.num_entities)]
        for h, _, t in self.triples:
            if h != t:
                nbr[h].add(t)
                nbr[t].add(h)
        return tuple(tuple(sorted(s)) for s in nbr)


def merge_graphs(g1: KnowledgeGraph, g2: KnowledgeGraph) -> MergedGraph:
    """Join two graphs into one global id space (G1 ids first, then G2)."""
    ne1, nr1 = g1.num_entities, g1.num_relations
    merged = [
        *g1.triples,
        *((h + ne1, r + nr1, t + ne1) for h, r, t in g2.triples),
    ]
    return MergedGraph(g1=g1, g2=g2, triples=tuple(merged))


def incident_relations(graph: MergedGraph, entity: int) -> frozenset[int]:
    """All relations appearing in a triple with `entity` as head or tail."""
    if not 0 <= entity < graph.num_entities:
        raise ValueError(f"entity id {entity} out of range [0, {graph.num_entities})")
    return frozenset(graph._incident[entity])


def relation_endpoints(graph: MergedGraph, relation: int) -> tuple[frozenset[int], frozenset[int], frozenset[int]]:
    """Head set, tail set, and their union for one relation."""
    if not 0 <= relation < graph.num_relations:
        raise ValueError(f"relation id {relation} out of range [0, {graph.num_relations})")
    heads, tails = graph._endpoints[relation]
    h, t = frozenset(heads), frozenset(tails)
    return h, t, h | t


@dataclass(frozen=True)
class AlignmentSeeds:
    """Known equivalent entity pairs, partitioned into train/validation/test.

    Pairs are (G1 global id, G2 global id). Each entity appears in at most
    one pair across the whole set.
    """

    train: tuple[Pair, ...]
    test: tuple[Pair, ...]
    validation: tuple[Pair, ...] = ()
    train_fraction: float = 0.0

    def __post_init__(self):
        left, right = set(), set()
        for e1, e2 in self.pairs:
            if e1 in left or e2 in right:
                raise StructuralError(f"entity appears in more than one seed pair: ({e1},{e2})")
            left.add(e1)
            right.add(e2)

    @property
    def pairs(self) -> tuple[Pair, ...]:
        return self.train + self.validation + self.test


@dataclass(frozen=True)
class RelationTestSet:
    """Reference relation pairs (G1 global id, G2 global id), evaluation only."""

    pairs: tuple[Pair, ...]

    def __post_init__(self):
        left = [p[0] for p in self.pairs]
        right = [p[1] for p in self.pairs]
        if len(set(left)) != len(left) or len(set(right)) != len(right):
            raise StructuralError("relation appears in more than one reference pair")


def split_seeds(
    pairs: Sequence[Pair],
    train_fraction: float,
    rng_seed: int,
    val_fraction: float = 0.0,
) -> AlignmentSeeds:
    """Deterministically shuffle and partition reference pairs.

    |train| = round(train_fraction * |pairs|), remainder is test; the optional
    validation carve-out is taken from the train portion (it never shrinks the
    test set, keeping test results comparable across val_fraction settings).
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0,1), got {train_fraction}")
    if not 0.0 <= val_fraction < 1.0:
        raise ValueError(f"val_fraction must be in [0,1), got {val_fraction}")
    pairs = list(pairs)
    order = derive_rng(rng_seed, "seed-split").permutation(len(pairs))
    shuffled = [tuple(pairs[i]) for i in order]
    n_train = int(math.floor(train_fraction * len(pairs) + 0.5))
    n_val = int(math.floor(val_fraction * n_train + 0.5))
    train = tuple(shuffled[: n_train - n_val])
    validation = tuple(shuffled[n_train - n_val : n_train])
    test = tuple(shuffled[n_train:])
    return AlignmentSeeds(train=train, test=test, validation=validation, train_fraction=train_fraction)
