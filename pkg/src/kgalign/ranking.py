"""Distance-based ranking shared by entity and relation alignment.

Candidates are ordered by ascending score; exact ties break toward the
smaller candidate id so rankings are fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def rank_rows(scores: np.ndarray, candidate_ids: np.ndarray, true_ids: np.ndarray, top_k: int):
    """Rank candidates per query row.

    Returns (ranks, top_ids, top_scores): `ranks[i]` is the 1-based position
    of `true_ids[i]` among the candidates; queries whose truth is not in the
    candidate pool get rank 0 (counts as a miss at every k).
    """
    n_q, n_c = scores.shape
    if candidate_ids.shape != (n_c,):
        raise ValueError(f"candidate ids shape {candidate_ids.shape} does not match scores {scores.shape}")
    top_k = min(top_k, n_c)
    ranks = np.zeros(n_q, dtype=np.int64)
    top_ids = np.zeros((n_q, top_k), dtype=np.int64)
    top_scores = np.zeros((n_q, top_k), dtype=np.float64)
    for i in range(n_q):
        order = np.lexsort((candidate_ids, scores[i]))
        ordered_ids = candidate_ids[order]
        hit = np.nonzero(ordered_ids == true_ids[i])[0]
        ranks[i] = int(hit[0]) + 1 if len(hit) else 0
        top_ids[i] = ordered_ids[:top_k]
        top_scores[i] = scores[i][order[:top_k]]
    return ranks, top_ids, top_scores


def hits_at(ranks: np.ndarray, k_list) -> dict[int, float]:
    """Fraction of queries whose true counterpart ranks within the top k."""
    out = {}
    for k in k_list:
        if k <= 0:
            raise ValueError(f"Hits@k requires k > 0, got {k}")
        out[int(k)] = float(np.mean((ranks >= 1) & (ranks <= k))) if len(ranks) else 0.0
    return out


@dataclass(frozen=True)
class RankingReport:
    """Ranked predictions for one alignment direction plus Hits@k scores."""

    kind: str                      # "entity" | "relation"
    direction: str                 # e.g. "g1_to_g2"
    candidate_policy: str
    query_ids: np.ndarray
    true_ids: np.ndarray
    ranks: np.ndarray
    top_ids: np.ndarray
    top_scores: np.ndarray
    hits: dict[int, float] = field(default_factory=dict)

    def correct_at_1(self) -> np.ndarray:
        return self.ranks == 1

    def write_tsv(self, path) -> None:
        """One row per query: id, ranked candidate ids, then their scores."""
        with open(path, "w", encoding="utf-8") as fh:
            for i, qid in enumerate(self.query_ids):
                ids = "\t".join(str(c) for c in self.top_ids[i])
                scores = "\t".join(f"{s:.6f}" for s in self.top_scores[i])
                fh.write(f"{qid}\t{ids}\t{scores}\n")

    def summary_lines(self) -> list[str]:
        lines = [f"{self.kind}_queries = {len(self.query_ids)}"]
        for k in sorted(self.hits):
            lines.append(f"{self.kind}_hits@{k} ({self.direction}) = {self.hits[k]:.4f}")
        return lines
