"""Entity-alignment scoring, diagnostics, and the seed-ratio sweep.

Prediction ranks candidates by ascending rowwise L1 distance in whatever
embedding space is passed in (encoder outputs for the preliminary model,
joint vectors for the full one).
"""

from __future__ import annotations

from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.spatial.distance import cdist

from .kg import AlignmentSeeds, MergedGraph, RelationTestSet, incident_relations
from .ranking import RankingReport, hits_at, rank_rows

CANDIDATE_POLICIES = ("test-counterparts", "all-opposite-graph")


def align_entities(
    embeddings: np.ndarray,
    test_pairs,
    graph: MergedGraph | None = None,
    candidate_policy: str = "test-counterparts",
    k_list=(1, 10),
    direction: str = "g1_to_g2",
    threads: int = 1,
) -> RankingReport:
    """Rank candidate counterparts per test entity and compute Hits@k.

    `test-counterparts` restricts candidates to the target-side entities of
    the test pairs (the usual benchmark protocol); `all-opposite-graph`
    ranks against the target graph's entire entity set, which requires
    `graph` and never scores higher.
    """
    test_pairs = list(test_pairs)
    if not test_pairs:
        raise ValueError("entity test set is empty")
    if candidate_policy not in CANDIDATE_POLICIES:
        raise ValueError(f"unknown candidate policy {candidate_policy!r}")
    if direction not in ("g1_to_g2", "g2_to_g1"):
        raise ValueError(f"unknown direction {direction!r}")
    if direction == "g1_to_g2":
        sources = np.asarray([p[0] for p in test_pairs], dtype=np.int64)
        targets = np.asarray([p[1] for p in test_pairs], dtype=np.int64)
    else:
        sources = np.asarray([p[1] for p in test_pairs], dtype=np.int64)
        targets = np.asarray([p[0] for p in test_pairs], dtype=np.int64)

    if candidate_policy == "test-counterparts":
        candidates = np.sort(targets)
    else:
        if graph is None:
            raise ValueError("all-opposite-graph policy requires the merged graph")
        if direction == "g1_to_g2":
            candidates = np.arange(graph.entity_offset, graph.num_entities, dtype=np.int64)
        else:
            candidates = np.arange(0, graph.entity_offset, dtype=np.int64)

    top_k = max(k_list)
    cand_emb = embeddings[candidates]

    def score_chunk(span):
        s, e = span
        return cdist(embeddings[sources[s:e]], cand_emb, metric="cityblock")

    chunk = 1024
    spans = [(s, min(s + chunk, len(sources))) for s in range(0, len(sources), chunk)]
    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(score_chunk, spans))
    else:
        blocks = [score_chunk(sp) for sp in spans]
    scores = np.vstack(blocks)

    ranks, top_ids, top_scores = rank_rows(scores, candidates, targets, top_k)
    return RankingReport(
        kind="entity",
        direction=direction,
        candidate_policy=candidate_policy,
        query_ids=sources,
        true_ids=targets,
        ranks=ranks,
        top_ids=top_ids,
        top_scores=top_scores,
        hits=hits_at(ranks, k_list),
    )


@dataclass(frozen=True)
class PartitionStats:
    """Neighborhood statistics of one correctness partition."""

    name: str
    count: int
    mean_neighbor_entities: tuple[float, float]   # (source side, target side)
    mean_neighbor_relations: tuple[float, float]
    pct_with_seed_neighbor: float
    pct_with_reference_relation: float


@dataclass(frozen=True)
class RelationPartitionStats:
    name: str
    count: int
    mean_frequency: tuple[float, float]


@dataclass(frozen=True)
class AlignmentStatistics:
    entity_partitions: tuple[PartitionStats, ...]
    relation_partitions: tuple[RelationPartitionStats, ...] = ()

    def lines(self) -> list[str]:
        out = []
        for p in self.entity_partitions:
            out.append(
                f"entities[{p.name}] n={p.count} "
                f"nbr_ent=({p.mean_neighbor_entities[0]:.2f},{p.mean_neighbor_entities[1]:.2f}) "
                f"nbr_rel=({p.mean_neighbor_relations[0]:.2f},{p.mean_neighbor_relations[1]:.2f}) "
                f"seed_nbr%={p.pct_with_seed_neighbor:.1f} ref_rel%={p.pct_with_reference_relation:.1f}"
            )
        for p in self.relation_partitions:
            out.append(
                f"relations[{p.name}] n={p.count} "
                f"freq=({p.mean_frequency[0]:.2f},{p.mean_frequency[1]:.2f})"
            )
        return out


_PARTITIONS = (
    ("pre+joint+", lambda pre, joint: pre & joint),
    ("pre-joint+", lambda pre, joint: ~pre & joint),
    ("pre-joint-", lambda pre, joint: ~pre & ~joint),
)


def _partition_masks(report_pre: RankingReport, report_joint: RankingReport):
    if not np.array_equal(report_pre.query_ids, report_joint.query_ids):
        raise ValueError("preliminary and joint reports must cover the same test set")
    pre = report_pre.correct_at_1()
    joint = report_joint.correct_at_1()
    return [(name, mask(pre, joint)) for name, mask in _PARTITIONS]


def alignment_statistics(
    graph: MergedGraph,
    report_pre: RankingReport,
    report_joint: RankingReport,
    seeds: AlignmentSeeds,
    relation_test: RelationTestSet | None = None,
    rel_report_pre: RankingReport | None = None,
    rel_report_joint: RankingReport | None = None,
) -> AlignmentStatistics:
    """Neighborhood/frequency profile of what each stage got right at rank 1.

    Test entities are split into correct-in-both / correct-only-joint /
    correct-in-neither; each partition reports mean neighbor-entity and
    neighbor-relation counts per side, the share of entities with at least
    one train-seed entity among their neighbors, and the share with at least
    one reference-set relation incident. When both relation reports are
    given, an analogous frequency table for relations is appended.
    """
    seed_entities = {e for pair in seeds.train for e in pair}
    ref_relations = set()
    if relation_test is not None:
        ref_relations = {r for pair in relation_test.pairs for r in pair}

    nbr = graph.neighbor_entities
    entity_parts = []
    for name, mask in _partition_masks(report_pre, report_joint):
        idx = np.nonzero(mask)[0]
        if len(idx) == 0:
            entity_parts.append(PartitionStats(name, 0, (0.0, 0.0), (0.0, 0.0), 0.0, 0.0))
            continue
        src = report_pre.query_ids[idx]
        dst = report_pre.true_ids[idx]
        ne_src = float(np.mean([len(nbr[e]) for e in src]))
        ne_dst = float(np.mean([len(nbr[e]) for e in dst]))
        nr_src = float(np.mean([len(incident_relations(graph, e)) for e in src]))
        nr_dst = float(np.mean([len(incident_relations(graph, e)) for e in dst]))
        with_seed = np.mean([
            any(x in seed_entities for x in nbr[e1]) or any(x in seed_entities for x in nbr[e2])
            for e1, e2 in zip(src, dst)
        ])
        with_ref_rel = np.mean([
            any(r in ref_relations for r in incident_relations(graph, e1))
            or any(r in ref_relations for r in incident_relations(graph, e2))
            for e1, e2 in zip(src, dst)
        ])
        entity_parts.append(PartitionStats(
            name=name,
            count=len(idx),
            mean_neighbor_entities=(ne_src, ne_dst),
            mean_neighbor_relations=(nr_src, nr_dst),
            pct_with_seed_neighbor=float(with_seed) * 100.0,
            pct_with_reference_relation=float(with_ref_rel) * 100.0,
        ))

    relation_parts = []
    if rel_report_pre is not None and rel_report_joint is not None:
        freq = np.zeros(graph.num_relations, dtype=np.int64)
        for _, r, _ in graph.triples:
            freq[r] += 1
        for name, mask in _partition_masks(rel_report_pre, rel_report_joint):
            idx = np.nonzero(mask)[0]
            if len(idx) == 0:
                relation_parts.append(RelationPartitionStats(name, 0, (0.0, 0.0)))
                continue
            r1 = rel_report_pre.query_ids[idx]
            r2 = rel_report_pre.true_ids[idx]
            relation_parts.append(RelationPartitionStats(
                name=name,
                count=len(idx),
                mean_frequency=(float(freq[r1].mean()), float(freq[r2].mean())),
            ))

    return AlignmentStatistics(
        entity_partitions=tuple(entity_parts),
        relation_partitions=tuple(relation_parts),
    )


@dataclass(frozen=True)
class SweepRow:
    ratio: float
    entity_hits1: float
    relation_hits1: float

    def as_csv(self) -> str:
        return f"{self.ratio},{self.entity_hits1:.4f},{self.relation_hits1:.4f}"


def seed_ratio_sweep(
    graph: MergedGraph,
    ref_pairs,
    relation_test: RelationTestSet,
    features,
    hgcn_config,
    train_config,
    ratios,
    val_fraction: float = 0.0,
) -> list[SweepRow]:
    """Retrain from scratch per seed ratio and tabulate final Hits@1 scores.

    Every run shares the same base seed, so rows differ only in how many
    reference pairs are exposed for training.
    """
    from .kg import split_seeds
    from .pipeline import evaluate_result
    from .training import train

    for ratio in ratios:
        if not 0.0 < ratio < 1.0:
            raise ValueError(f"seed ratio must be in (0,1), got {ratio}")
    from .adjacency import build_adjacency

    adj = build_adjacency(graph)
    rows = []
    for ratio in ratios:
        seeds = split_seeds(ref_pairs, ratio, train_config.rng_seed, val_fraction=val_fraction)
        result = train(graph, adj, features, seeds, hgcn_config, train_config)
        scores = evaluate_result(graph, result, features, adj, seeds, relation_test, train_config.beta, k_list=(1,))
        rows.append(SweepRow(
            ratio=ratio,
            entity_hits1=scores.entity_joint.hits[1],
            relation_hits1=scores.relation_joint.hits[1] if scores.relation_joint else 0.0,
        ))
    return rows


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("ratio,entity_hits1,relation_hits1\n")
        for row in rows:
            fh.write(row.as_csv() + "\n")
