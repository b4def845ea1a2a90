import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgalign.adjacency import build_adjacency
from kgalign.datasets import SyntheticSpec, generate_synthetic
from kgalign.evaluation import (
    align_entities,
    alignment_statistics,
    seed_ratio_sweep,
    write_sweep_csv,
)
from kgalign.kg import AlignmentSeeds, KnowledgeGraph, RelationTestSet, merge_graphs
from kgalign.model import HgcnConfig
from kgalign.ranking import RankingReport, hits_at
from kgalign.training import TrainConfig

from conftest import random_merged


def test_hits_counting_from_known_ranks():
    ranks = np.array([1, 3, 12])
    scores = hits_at(ranks, (1, 10))
    assert scores[1] == pytest.approx(1 / 3)
    assert scores[10] == pytest.approx(2 / 3)


def test_hits_rejects_bad_k():
    with pytest.raises(ValueError):
        hits_at(np.array([1]), (0,))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(min_value=1, max_value=50), min_size=1, max_size=30))
def test_hits_monotone_in_k(rank_list):
    ranks = np.array(rank_list)
    ks = list(range(1, 51))
    scores = hits_at(ranks, ks)
    values = [scores[k] for k in ks]
    assert all(a <= b for a, b in zip(values, values[1:]))


def test_align_entities_exact_match_is_perfect(rng):
    emb = np.zeros((8, 3))
    emb[:4] = rng.normal(size=(4, 3))
    emb[4:] = emb[:4]  # every source equals its counterpart
    pairs = [(i, 4 + i) for i in range(4)]
    report = align_entities(emb, pairs, k_list=(1,))
    assert report.hits[1] == 1.0


def test_align_entities_matches_bruteforce_rank(rng):
    for _ in range(10):
        n = 20
        emb = rng.normal(size=(2 * n, 4))
        pairs = [(i, n + i) for i in range(n)]
        report = align_entities(emb, pairs, k_list=(1, 5))
        candidates = [n + i for i in range(n)]
        for row, (src, true) in enumerate(pairs):
            order = sorted(candidates, key=lambda c: (np.abs(emb[src] - emb[c]).sum(), c))
            assert report.ranks[row] == order.index(true) + 1


def test_align_entities_tie_breaks_by_id():
    emb = np.zeros((4, 2))
    emb[2] = emb[3] = [1.0, 1.0]  # both candidates equidistant from both sources
    report = align_entities(emb, [(0, 3), (1, 2)], k_list=(1,))
    assert list(report.top_ids[0]) == [2]  # smaller id wins the tie
    assert report.ranks[0] == 2
    assert report.ranks[1] == 1


def test_align_entities_direction_swap(rng):
    emb = rng.normal(size=(6, 3))
    pairs = [(0, 3), (1, 4), (2, 5)]
    fwd = align_entities(emb, pairs, direction="g1_to_g2", k_list=(1,))
    rev = align_entities(emb, pairs, direction="g2_to_g1", k_list=(1,))
    assert list(fwd.query_ids) == [0, 1, 2]
    assert list(rev.query_ids) == [3, 4, 5]


def test_all_opposite_graph_policy_never_scores_higher(rng):
    for trial in range(10):
        merged = random_merged(rng, n1=15, n2=15, t1=20, t2=20)
        emb = rng.normal(size=(merged.num_entities, 4))
        pairs = [(i, 15 + i) for i in range(8)]
        test_pool = align_entities(emb, pairs, merged, "test-counterparts", k_list=(1, 3))
        full_pool = align_entities(emb, pairs, merged, "all-opposite-graph", k_list=(1, 3))
        for k in (1, 3):
            assert full_pool.hits[k] <= test_pool.hits[k] + 1e-12


def test_align_entities_threads_match_single(rng):
    emb = rng.normal(size=(40, 4))
    pairs = [(i, 20 + i) for i in range(20)]
    a = align_entities(emb, pairs, k_list=(1, 5), threads=1)
    b = align_entities(emb, pairs, k_list=(1, 5), threads=4)
    np.testing.assert_array_equal(a.ranks, b.ranks)
    np.testing.assert_array_equal(a.top_ids, b.top_ids)


def test_align_entities_empty_test_set(rng):
    with pytest.raises(ValueError):
        align_entities(rng.normal(size=(4, 2)), [])


def make_report(kind, queries, trues, ranks):
    queries = np.asarray(queries)
    trues = np.asarray(trues)
    ranks = np.asarray(ranks)
    return RankingReport(
        kind=kind, direction="g1_to_g2", candidate_policy="test-counterparts",
        query_ids=queries, true_ids=trues, ranks=ranks,
        top_ids=np.zeros((len(queries), 1), dtype=np.int64),
        top_scores=np.zeros((len(queries), 1)),
        hits=hits_at(ranks, (1,)),
    )


def test_statistics_all_correct_single_partition(six_node_graph, six_node_seeds):
    report = make_report("entity", [2], [5], [1])
    stats = alignment_statistics(six_node_graph, report, report, six_node_seeds)
    counts = {p.name: p.count for p in stats.entity_partitions}
    assert counts == {"pre+joint+": 1, "pre-joint+": 0, "pre-joint-": 0}


def test_statistics_hand_counts():
    # G1: 0-1 linked by rel 0, 1-2 by rel 1; entity 3 isolated-ish on G2 side
    g1 = KnowledgeGraph("G1", 4, 2, ((0, 0, 1), (1, 1, 2), (0, 1, 3)))
    g2 = KnowledgeGraph("G2", 4, 2, ((0, 0, 1), (1, 1, 2), (0, 1, 3)))
    graph = merge_graphs(g1, g2)
    seeds = AlignmentSeeds(train=((0, 4),), test=((1, 5), (2, 6)), train_fraction=0.33)
    pre = make_report("entity", [1, 2], [5, 6], [1, 4])
    joint = make_report("entity", [1, 2], [5, 6], [1, 1])
    rel_test = RelationTestSet(pairs=((0, 2), (1, 3)))
    stats = alignment_statistics(graph, pre, joint, seeds, rel_test,
                                 make_report("relation", [0, 1], [2, 3], [1, 2]),
                                 make_report("relation", [0, 1], [2, 3], [1, 1]))
    by_name = {p.name: p for p in stats.entity_partitions}
    both = by_name["pre+joint+"]
    assert both.count == 1
    # entity 1 has neighbors {0, 2}; its counterpart 5 has {4, 6}
    assert both.mean_neighbor_entities == (2.0, 2.0)
    assert both.mean_neighbor_relations == (2.0, 2.0)
    assert both.pct_with_seed_neighbor == 100.0  # neighbor 0 is a train seed
    only_joint = by_name["pre-joint+"]
    assert only_joint.count == 1
    # entity 2 has one neighbor (1) and one incident relation
    assert only_joint.mean_neighbor_entities == (1.0, 1.0)
    rel_parts = {p.name: p for p in stats.relation_partitions}
    assert rel_parts["pre+joint+"].count == 1
    assert rel_parts["pre+joint+"].mean_frequency == (1.0, 1.0)  # relation 0 appears once
    assert rel_parts["pre-joint+"].mean_frequency == (2.0, 2.0)  # relation 1 appears twice


def test_statistics_requires_same_test_set(six_node_graph, six_node_seeds):
    a = make_report("entity", [2], [5], [1])
    b = make_report("entity", [0], [3], [1])
    with pytest.raises(ValueError):
        alignment_statistics(six_node_graph, a, b, six_node_seeds)


def test_seed_ratio_sweep_single_ratio(tmp_path):
    spec = SyntheticSpec(n_entities=30, n_relations=3, n_triples=80, seed_fraction=0.3,
                         rng_seed=4, feature_dim=6)
    graph, seeds, rel_test, features = generate_synthetic(spec)
    hgcn_cfg = HgcnConfig.uniform(features.dim, relation_dim=6, rng_seed=4)
    cfg = TrainConfig(k_neg=2, resample_interval=5, max_epochs=10, pretrain_cap=5, rng_seed=4)
    rows = seed_ratio_sweep(graph, seeds.pairs, rel_test, features, hgcn_cfg, cfg, [0.3])
    assert len(rows) == 1
    assert rows[0].ratio == 0.3
    assert 0.0 <= rows[0].entity_hits1 <= 1.0
    out = tmp_path / "sweep.csv"
    write_sweep_csv(rows, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "ratio,entity_hits1,relation_hits1"
    assert lines[1].startswith("0.3,")


def test_seed_ratio_sweep_rejects_bad_ratio(rng):
    merged = random_merged(rng)
    with pytest.raises(ValueError):
        seed_ratio_sweep(merged, [(0, 5)], RelationTestSet(()), None,
                         None, TrainConfig(), [1.5])
