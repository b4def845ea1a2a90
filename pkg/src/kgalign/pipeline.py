"""Glue from trained parameters to alignment reports.

The preliminary model is scored on raw encoder outputs (relations via the
untransformed head/tail means); the full model is scored on joint entity
vectors and transformed relation vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adjacency import NormalizedAdjacency
from .datasets import FeatureTable
from .evaluation import AlignmentStatistics, alignment_statistics, align_entities
from .kg import AlignmentSeeds, MergedGraph, RelationTestSet
from .model import HgcnConfig, ModelParams, forward_values
from .ranking import RankingReport
from .relations import (
    RelationIncidence,
    align_relations,
    compute_joint_embeddings,
    compute_relation_embeddings,
)
from .training import TrainResult


@dataclass(frozen=True)
class EmbeddingSet:
    """Everything derivable from one parameter set: encoder outputs,
    relation vectors, and joint entity vectors."""

    x_prime: np.ndarray
    relation_matrix: np.ndarray
    joint: np.ndarray


def embed(
    graph: MergedGraph,
    params: ModelParams,
    config: HgcnConfig,
    features: FeatureTable,
    adj: NormalizedAdjacency,
    incidence: RelationIncidence | None = None,
    use_relation_transform: bool = True,
) -> EmbeddingSet:
    inc = incidence if incidence is not None else RelationIncidence(graph)
    x_prime = forward_values(params, config, features, adj)
    transform = params.relation_transform if use_relation_transform else None
    rel = compute_relation_embeddings(x_prime, graph, transform, incidence=inc)
    joint = compute_joint_embeddings(x_prime, rel, graph, incidence=inc)
    return EmbeddingSet(x_prime=x_prime, relation_matrix=rel.matrix, joint=joint.matrix)


@dataclass
class EvaluationScores:
    entity_pre: RankingReport
    entity_joint: RankingReport
    relation_pre: RankingReport | None = None
    relation_joint: RankingReport | None = None
    statistics: AlignmentStatistics | None = None

    def summary_lines(self) -> list[str]:
        lines = []
        for tag, report in (
            ("entity_pre", self.entity_pre),
            ("entity_joint", self.entity_joint),
            ("relation_pre", self.relation_pre),
            ("relation_joint", self.relation_joint),
        ):
            if report is None:
                continue
            for k in sorted(report.hits):
                lines.append(f"{tag}_hits@{k} = {report.hits[k]:.4f}")
        if self.statistics is not None:
            lines.extend(self.statistics.lines())
        return lines


def evaluate_result(
    graph: MergedGraph,
    result: TrainResult,
    features: FeatureTable,
    adj: NormalizedAdjacency,
    seeds: AlignmentSeeds,
    relation_test: RelationTestSet | None,
    beta: float,
    k_list=(1, 10),
    candidate_policy: str = "test-counterparts",
    direction: str = "g1_to_g2",
    threads: int = 1,
    with_statistics: bool = True,
) -> EvaluationScores:
    """Score both training stages on the held-out entity and relation pairs."""
    inc = RelationIncidence(graph)
    pre_x = forward_values(result.pretrain_params, result.config, features, adj)
    joint_set = embed(graph, result.params, result.config, features, adj, incidence=inc)

    entity_pre = align_entities(
        pre_x, seeds.test, graph, candidate_policy, k_list, direction, threads=threads
    )
    entity_joint = align_entities(
        joint_set.joint, seeds.test, graph, candidate_policy, k_list, direction, threads=threads
    )

    relation_pre = relation_joint = None
    if relation_test is not None and relation_test.pairs:
        rel_pre_emb = compute_relation_embeddings(pre_x, graph, None, incidence=inc)
        rel_joint_emb = compute_relation_embeddings(
            joint_set.x_prime, graph, result.params.relation_transform, incidence=inc
        )
        relation_pre = align_relations(rel_pre_emb, graph, seeds, relation_test, beta, k_list, incidence=inc)
        relation_joint = align_relations(rel_joint_emb, graph, seeds, relation_test, beta, k_list, incidence=inc)

    stats = None
    if with_statistics:
        stats = alignment_statistics(
            graph, entity_pre, entity_joint, seeds,
            relation_test=relation_test,
            rel_report_pre=relation_pre,
            rel_report_joint=relation_joint,
        )
    return EvaluationScores(
        entity_pre=entity_pre,
        entity_joint=entity_joint,
        relation_pre=relation_pre,
        relation_joint=relation_joint,
        statistics=stats,
    )
