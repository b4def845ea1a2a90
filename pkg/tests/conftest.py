import numpy as np
import pytest

from kgalign.kg import AlignmentSeeds, KnowledgeGraph, merge_graphs


def random_graph(rng, label, n_entities, n_relations, n_triples):
    """Random multi-relational graph; every relation gets at least one triple."""
    triples = set()
    for r in range(n_relations):
        triples.add((int(rng.integers(n_entities)), r, int(rng.integers(n_entities))))
    while len(triples) < n_triples:
        triples.add((
            int(rng.integers(n_entities)),
            int(rng.integers(n_relations)),
            int(rng.integers(n_entities)),
        ))
    return KnowledgeGraph(label, n_entities, n_relations, tuple(sorted(triples)))


def random_merged(rng, n1=5, n2=6, r1=2, r2=3, t1=8, t2=9):
    return merge_graphs(
        random_graph(rng, "G1", n1, r1, t1),
        random_graph(rng, "G2", n2, r2, t2),
    )


@pytest.fixture
def six_node_graph():
    """Two 3-entity graphs, two relations each, every relation populated."""
    g1 = KnowledgeGraph("G1", 3, 2, ((0, 0, 1), (0, 1, 2), (1, 1, 2)))
    g2 = KnowledgeGraph("G2", 3, 2, ((0, 0, 1), (0, 1, 2), (2, 1, 1)))
    return merge_graphs(g1, g2)


@pytest.fixture
def six_node_seeds():
    return AlignmentSeeds(train=((0, 3), (1, 4)), test=((2, 5),), train_fraction=0.6)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
