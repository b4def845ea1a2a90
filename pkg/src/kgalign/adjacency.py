"""Symmetric-normalized propagation matrix for the entity graph.

The convolution treats the merged graph as undirected and unlabeled: any
triple linking two entities, in either direction, contributes a single
binary edge. Self-connections are always added before degree normalization,
so isolated entities propagate their own features unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import SparseMatrix
from .kg import MergedGraph


@dataclass(frozen=True)
class NormalizedAdjacency:
    """D^(-1/2) (A + I) D^(-1/2) plus the degree diagonal it was built from."""

    matrix: SparseMatrix
    degree_vector: np.ndarray
    self_loops: bool = True


def build_adjacency(graph: MergedGraph, weighted: bool = False) -> NormalizedAdjacency:
    """Build the normalized propagation matrix of the merged entity graph.

    With `weighted=True` each undirected entity pair is weighted by its
    triple count instead of the default binary 0/1 (ablation option);
    normalization is identical in both modes.
    """
    n = graph.num_entities
    counts: dict[tuple[int, int], float] = {}
    for h, _, t in graph.triples:
        key = (h, t) if h <= t else (t, h)
        counts[key] = counts.get(key, 0.0) + 1.0

    rows, cols, vals = [], [], []
    diag = np.ones(n, dtype=np.float64)  # self-connections
    for (i, j), c in counts.items():
        w = c if weighted else 1.0
        if i == j:
            diag[i] += w
        else:
            rows.extend((i, j))
            cols.extend((j, i))
            vals.extend((w, w))

    degree = diag.copy()
    if rows:
        np.add.at(degree, np.asarray(rows), np.asarray(vals))

    inv_sqrt = 1.0 / np.sqrt(degree)
    all_rows = np.concatenate([np.asarray(rows, dtype=np.int64), np.arange(n)])
    all_cols = np.concatenate([np.asarray(cols, dtype=np.int64), np.arange(n)])
    all_vals = np.concatenate([np.asarray(vals, dtype=np.float64), diag])
    all_vals = all_vals * inv_sqrt[all_rows] * inv_sqrt[all_cols]

    matrix = SparseMatrix(n, n, all_rows, all_cols, all_vals)
    return NormalizedAdjacency(matrix=matrix, degree_vector=degree)
