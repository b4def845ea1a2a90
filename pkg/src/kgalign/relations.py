"""Relation representations derived from entity embeddings, and joint vectors.

A relation's vector is built from the mean embedding of its head entities
concatenated with the mean of its tail entities, passed through one shared
linear map. An entity's joint vector appends the sum of its incident
relations' vectors to its own embedding. Both constructions are recorded on
the tape, so losses computed on them push gradients back into the encoder.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .autodiff import GroupMap, Node, Tape
from .errors import StructuralError
from .kg import AlignmentSeeds, MergedGraph, RelationTestSet, relation_endpoints
from .ranking import RankingReport, hits_at, rank_rows


class RelationIncidence:
    """Static head/tail/incidence index sets of a merged graph."""

    def __init__(self, graph: MergedGraph):
        self.graph = graph
        n_ent, n_rel = graph.num_entities, graph.num_relations
        heads: list[list[int]] = [[] for _ in range(n_rel)]
        tails: list[list[int]] = [[] for _ in range(n_rel)]
        ent_rels: list[set[int]] = [set() for _ in range(n_ent)]
        for h, r, t in graph.triples:
            heads[r].append(h)
            tails[r].append(t)
            ent_rels[h].add(r)
            ent_rels[t].add(r)
        self.head_sets = [np.unique(np.asarray(h, dtype=np.int64)) for h in heads]
        self.tail_sets = [np.unique(np.asarray(t, dtype=np.int64)) for t in tails]
        self.entity_relations = [np.asarray(sorted(s), dtype=np.int64) for s in ent_rels]
        self.empty_relations = [r for r in range(n_rel) if len(self.head_sets[r]) == 0]

    @cached_property
    def head_groups(self) -> GroupMap:
        return GroupMap(self.head_sets, self.graph.num_entities)

    @cached_property
    def tail_groups(self) -> GroupMap:
        return GroupMap(self.tail_sets, self.graph.num_entities)

    @cached_property
    def entity_relation_groups(self) -> GroupMap:
        return GroupMap(self.entity_relations, self.graph.num_relations)

    def ht_set(self, relation: int) -> np.ndarray:
        return np.union1d(self.head_sets[relation], self.tail_sets[relation])


@dataclass(frozen=True)
class RelationEmbeddings:
    """One vector per merged-graph relation, plus where it came from."""

    matrix: np.ndarray
    source: str = "joint"


@dataclass(frozen=True)
class JointEmbeddings:
    """Entity embeddings concatenated with their relation-context sums."""

    matrix: np.ndarray
    entity_dim: int


def approximate_relations(
    tape: Tape,
    x_prime: Node,
    graph: MergedGraph,
    w_r: Node | None,
    incidence: RelationIncidence | None = None,
) -> Node:
    """Tape-recorded relation vectors: concat(mean heads, mean tails) @ transform.

    With `w_r is None` the shared transform is skipped (identity), which is
    what the preliminary stage uses before the transform exists.
    """
    inc = incidence if incidence is not None else RelationIncidence(graph)
    if inc.empty_relations:
        raise StructuralError(f"relations without triples cannot be embedded: {inc.empty_relations[:8]}")
    head_mean = tape.mean_rows(x_prime, inc.head_groups, name="relation_head_mean")
    tail_mean = tape.mean_rows(x_prime, inc.tail_groups, name="relation_tail_mean")
    concat = tape.concat_cols(head_mean, tail_mean, name="relation_concat")
    if w_r is None:
        return concat
    return tape.matmul(concat, w_r, name="relation_transform")


def joint_entities(
    tape: Tape,
    x_prime: Node,
    relation_vectors: Node,
    graph: MergedGraph,
    incidence: RelationIncidence | None = None,
) -> Node:
    """Tape-recorded joint vectors: entity embedding || sum of incident relations.

    Entities with no incident relation get a zero relation-context block.
    """
    inc = incidence if incidence is not None else RelationIncidence(graph)
    context = tape.sum_rows_by_group(relation_vectors, inc.entity_relation_groups, name="relation_context")
    return tape.concat_cols(x_prime, context, name="joint_concat")


def compute_relation_embeddings(
    x_prime: np.ndarray,
    graph: MergedGraph,
    relation_transform: np.ndarray | None = None,
    incidence: RelationIncidence | None = None,
) -> RelationEmbeddings:
    """Plain-array relation vectors for scoring (no gradients kept)."""
    tape = Tape(np.float64)
    x = tape.const(x_prime, name="x_prime")
    w = tape.var(relation_transform, name="relation_transform") if relation_transform is not None else None
    vec = approximate_relations(tape, x, graph, w, incidence=incidence)
    return RelationEmbeddings(matrix=vec.value, source="joint" if relation_transform is not None else "preliminary")


def compute_joint_embeddings(
    x_prime: np.ndarray,
    rel_emb: RelationEmbeddings,
    graph: MergedGraph,
    incidence: RelationIncidence | None = None,
) -> JointEmbeddings:
    tape = Tape(np.float64)
    x = tape.const(x_prime, name="x_prime")
    r = tape.const(rel_emb.matrix, name="relation_vectors")
    joint = joint_entities(tape, x, r, graph, incidence=incidence)
    return JointEmbeddings(matrix=joint.value, entity_dim=x_prime.shape[1])


def _seed_overlap_counts(
    incidence: RelationIncidence,
    train_pairs,
    g1_relations: np.ndarray,
    g2_relations: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise seed-overlap counts and HT-size sums for the relation bonus.

    overlap[i, j] counts train pairs (e1, e2) with e1 in HT of g1_relations[i]
    and e2 in HT of g2_relations[j]; sizes[i, j] = |HT_i| + |HT_j| (entity id
    spaces are disjoint, so that union has no overlap to subtract).
    """
    n_pairs = len(train_pairs)
    left = np.zeros((len(g1_relations), n_pairs), dtype=np.float32)
    right = np.zeros((len(g2_relations), n_pairs), dtype=np.float32)
    ht_left = np.zeros(len(g1_relations))
    ht_right = np.zeros(len(g2_relations))
    e1s = np.asarray([p[0] for p in train_pairs], dtype=np.int64)
    e2s = np.asarray([p[1] for p in train_pairs], dtype=np.int64)
    for i, r in enumerate(g1_relations):
        ht = incidence.ht_set(int(r))
        ht_left[i] = len(ht)
        if n_pairs:
            left[i] = np.isin(e1s, ht)
    for j, r in enumerate(g2_relations):
        ht = incidence.ht_set(int(r))
        ht_right[j] = len(ht)
        if n_pairs:
            right[j] = np.isin(e2s, ht)
    overlap = left @ right.T if n_pairs else np.zeros((len(g1_relations), len(g2_relations)))
    sizes = ht_left[:, None] + ht_right[None, :]
    return np.asarray(overlap, dtype=np.float64), sizes


def _l1_cross(a: np.ndarray, b: np.ndarray, chunk: int = 256) -> np.ndarray:
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.float64)
    for s in range(0, a.shape[0], chunk):
        e = min(s + chunk, a.shape[0])
        out[s:e] = np.abs(a[s:e, None, :] - b[None, :, :]).sum(axis=2)
    return out


def relation_distance(
    r1: int,
    r2: int,
    rel_emb: RelationEmbeddings,
    graph: MergedGraph,
    train_seeds: AlignmentSeeds,
    beta: float,
) -> float:
    """Score one cross-graph relation pair (smaller is more alignable).

    L1 distance between the two relation vectors, minus a bonus proportional
    to how many train seed pairs sit inside the relations' endpoint sets.
    """
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    if graph.relation_side(r1) != "G1" or graph.relation_side(r2) != "G2":
        raise ValueError(f"relation pair ({r1},{r2}) must come from opposite graphs (G1 first)")
    dist = float(np.abs(rel_emb.matrix[r1] - rel_emb.matrix[r2]).sum())
    _, _, ht1 = relation_endpoints(graph, r1)
    _, _, ht2 = relation_endpoints(graph, r2)
    overlap = sum(1 for e1, e2 in train_seeds.train if e1 in ht1 and e2 in ht2)
    denom = len(ht1 | ht2)
    bonus = beta * overlap / denom if denom else 0.0
    return dist - bonus


def align_relations(
    rel_emb: RelationEmbeddings,
    graph: MergedGraph,
    seeds: AlignmentSeeds,
    test: RelationTestSet,
    beta: float,
    k_list=(1, 10),
    incidence: RelationIncidence | None = None,
) -> RankingReport:
    """Rank every G2 relation per G1 test relation and report Hits@k."""
    if not test.pairs:
        raise ValueError("relation test set is empty")
    inc = incidence if incidence is not None else RelationIncidence(graph)
    g1_rels = np.asarray([p[0] for p in test.pairs], dtype=np.int64)
    true_ids = np.asarray([p[1] for p in test.pairs], dtype=np.int64)
    candidates = np.arange(graph.relation_offset, graph.num_relations, dtype=np.int64)

    scores = _l1_cross(rel_emb.matrix[g1_rels], rel_emb.matrix[candidates])
    if beta > 0 and seeds.train:
        overlap, sizes = _seed_overlap_counts(inc, seeds.train, g1_rels, candidates)
        with np.errstate(invalid="ignore"):
            bonus = np.where(sizes > 0, beta * overlap / sizes, 0.0)
        scores = scores - bonus

    top_k = max(k_list)
    ranks, top_ids, top_scores = rank_rows(scores, candidates, true_ids, top_k)
    return RankingReport(
        kind="relation",
        direction="g1_to_g2",
        candidate_policy="all-opposite-graph",
        query_ids=g1_rels,
        true_ids=true_ids,
        ranks=ranks,
        top_ids=top_ids,
        top_scores=top_scores,
        hits=hits_at(ranks, k_list),
    )
