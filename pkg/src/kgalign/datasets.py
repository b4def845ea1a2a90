"""Dataset I/O and feature initialization.

Directory layout (tab-separated, UTF-8, ids are per-file integers):

    ent_ids_1 / ent_ids_2      <id>\t<uri-or-name>
    rel_ids_1 / rel_ids_2      <id>\t<uri-or-name>
    triples_1 / triples_2      <head-id>\t<relation-id>\t<tail-id>
    ref_ent_ids                <entity-id-in-G1>\t<entity-id-in-G2>
    ref_rel_ids                optional, <relation-id-in-G1>\t<relation-id-in-G2>
    ent_names_1 / ent_names_2  optional name overrides (e.g. translations)
    ent_features_1 / _2        optional precomputed features, <id>\t<f1> <f2> ...

Ids are re-indexed to dense integers at load time (sorted by original id);
original ids and display names are kept in side tables. Synthetic datasets
are written in exactly this layout so every downstream command is
format-agnostic.
"""

from __future__ import annotations

import logging
import math
import string
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError, StructuralError
from .kg import AlignmentSeeds, KnowledgeGraph, MergedGraph, Pair, RelationTestSet, merge_graphs, split_seeds
from .rng import derive_rng

log = logging.getLogger(__name__)

FALLBACK_SIGMA = 0.3  # scale of random vectors for out-of-vocabulary names

_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


@dataclass(frozen=True)
class FeatureTable:
    """One initial feature vector per merged-graph entity (row = global id)."""

    dim: int
    matrix: np.ndarray
    coverage: float = 1.0

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[1] != self.dim:
            raise ConfigError(f"feature matrix shape {self.matrix.shape} does not match dim={self.dim}")
        if not np.all(np.isfinite(self.matrix)):
            raise ConfigError("feature matrix contains non-finite values")

    def vector(self, gid: int) -> np.ndarray:
        return self.matrix[gid]


@dataclass(frozen=True)
class LoadedDataset:
    graph: MergedGraph
    ref_pairs: tuple[Pair, ...]
    relation_test: RelationTestSet
    entity_names: dict[int, str]
    features: FeatureTable | None = None


def display_name(uri: str) -> str:
    """Human-readable name from a URI: last path segment, underscores to spaces."""
    tail = uri.rsplit("/", 1)[-1]
    return tail.replace("_", " ").strip() or uri


def _read_lines(path: Path, n_fields: int):
    if not path.exists():
        raise FileNotFoundError(f"missing dataset file: {path}")
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != n_fields:
                raise ParseError(path, line_no, f"expected {n_fields} tab-separated fields, got {len(parts)}")
            yield line_no, parts


def _read_id_map(path: Path) -> tuple[dict[int, int], list[str]]:
    """Original-id -> dense index (sorted by original id), plus names by index."""
    raw: dict[int, str] = {}
    for line_no, (sid, name) in _read_lines(path, 2):
        try:
            oid = int(sid)
        except ValueError:
            raise ParseError(path, line_no, f"id is not an integer: {sid!r}") from None
        if oid in raw:
            raise StructuralError(f"{path}: duplicate id {oid}")
        raw[oid] = name
    order = sorted(raw)
    to_dense = {oid: i for i, oid in enumerate(order)}
    return to_dense, [raw[oid] for oid in order]


def _read_triples(path: Path, ent_map: dict[int, int], rel_map: dict[int, int]) -> tuple:
    triples = []
    seen = set()
    duplicates = 0
    for line_no, parts in _read_lines(path, 3):
        try:
            h, r, t = (int(p) for p in parts)
        except ValueError:
            raise ParseError(path, line_no, f"non-integer triple: {parts!r}") from None
        for raw, m, kind in ((h, ent_map, "entity"), (r, rel_map, "relation"), (t, ent_map, "entity")):
            if raw not in m:
                raise StructuralError(f"{path}:{line_no}: triple references unknown {kind} id {raw}")
        triple = (ent_map[h], rel_map[r], ent_map[t])
        if triple in seen:
            duplicates += 1
            continue
        seen.add(triple)
        triples.append(triple)
    if duplicates:
        log.info("%s: dropped %d duplicate triples", path, duplicates)
    return tuple(triples)


def _read_pairs(path: Path, left_map: dict[int, int], right_map: dict[int, int], kind: str) -> tuple:
    pairs = []
    for line_no, (a, b) in _read_lines(path, 2):
        try:
            ia, ib = int(a), int(b)
        except ValueError:
            raise ParseError(path, line_no, f"non-integer pair: {(a, b)!r}") from None
        if ia not in left_map or ib not in right_map:
            raise StructuralError(f"{path}:{line_no}: pair references unknown {kind} id")
        pairs.append((left_map[ia], right_map[ib]))
    return tuple(pairs)


def _read_name_overrides(path: Path, id_map: dict[int, int]) -> dict[int, str]:
    names = {}
    for line_no, (sid, name) in _read_lines(path, 2):
        try:
            oid = int(sid)
        except ValueError:
            raise ParseError(path, line_no, f"id is not an integer: {sid!r}") from None
        if oid not in id_map:
            raise StructuralError(f"{path}:{line_no}: name override for unknown id {oid}")
        names[id_map[oid]] = name
    return names


def _read_feature_file(path: Path, id_map: dict[int, int]) -> dict[int, np.ndarray]:
    feats = {}
    for line_no, (sid, vec) in _read_lines(path, 2):
        try:
            oid = int(sid)
            values = np.array([float(v) for v in vec.split()], dtype=np.float64)
        except ValueError:
            raise ParseError(path, line_no, "malformed feature row") from None
        if oid not in id_map:
            raise StructuralError(f"{path}:{line_no}: features for unknown id {oid}")
        feats[id_map[oid]] = values
    return feats


def load_dbp15k(dataset_dir) -> LoadedDataset:
    """Load a dataset directory into the merged in-memory model."""
    d = Path(dataset_dir)
    ent_maps, rel_maps, names, graphs = [], [], [], []
    for side, label in ((1, "G1"), (2, "G2")):
        ent_map, ent_names = _read_id_map(d / f"ent_ids_{side}")
        rel_map, _ = _read_id_map(d / f"rel_ids_{side}")
        triples = _read_triples(d / f"triples_{side}", ent_map, rel_map)
        graphs.append(KnowledgeGraph(label, len(ent_map), len(rel_map), triples))
        ent_maps.append(ent_map)
        rel_maps.append(rel_map)
        names.append(ent_names)

    graph = merge_graphs(graphs[0], graphs[1])

    ref_local = _read_pairs(d / "ref_ent_ids", ent_maps[0], ent_maps[1], "entity")
    ref_pairs = tuple((e1, e2 + graph.entity_offset) for e1, e2 in ref_local)

    rel_path = d / "ref_rel_ids"
    rel_pairs: tuple = ()
    if rel_path.exists():
        local = _read_pairs(rel_path, rel_maps[0], rel_maps[1], "relation")
        rel_pairs = tuple((r1, r2 + graph.relation_offset) for r1, r2 in local)

    entity_names = {}
    for side, (offset, ent_map, default_names) in enumerate(
        ((0, ent_maps[0], names[0]), (graph.entity_offset, ent_maps[1], names[1]))
    ):
        for dense, uri in enumerate(default_names):
            entity_names[dense + offset] = display_name(uri)
        override_path = d / f"ent_names_{side + 1}"
        if override_path.exists():
            for dense, name in _read_name_overrides(override_path, ent_map).items():
                entity_names[dense + offset] = name

    features = None
    f1, f2 = d / "ent_features_1", d / "ent_features_2"
    if f1.exists() and f2.exists():
        rows1 = _read_feature_file(f1, ent_maps[0])
        rows2 = _read_feature_file(f2, ent_maps[1])
        if len(rows1) != graphs[0].num_entities or len(rows2) != graphs[1].num_entities:
            raise StructuralError("feature files must cover every entity of their graph")
        dims = {v.shape[0] for v in rows1.values()} | {v.shape[0] for v in rows2.values()}
        if len(dims) != 1:
            raise ConfigError(f"inconsistent feature dimensions in files: {sorted(dims)}")
        dim = dims.pop()
        matrix = np.zeros((graph.num_entities, dim), dtype=np.float64)
        for lid, vec in rows1.items():
            matrix[lid] = vec
        for lid, vec in rows2.items():
            matrix[lid + graph.entity_offset] = vec
        features = FeatureTable(dim=dim, matrix=matrix)

    return LoadedDataset(
        graph=graph,
        ref_pairs=ref_pairs,
        relation_test=RelationTestSet(pairs=rel_pairs),
        entity_names=entity_names,
        features=features,
    )


def write_dataset(
    out_dir,
    graph: MergedGraph,
    ref_pairs,
    relation_test: RelationTestSet | None = None,
    entity_names: dict[int, str] | None = None,
    features: FeatureTable | None = None,
) -> None:
    """Write the merged model back to the on-disk layout (dense ids as file ids)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entity_names = entity_names or {}
    sides = (
        ("1", graph.g1, 0, 0),
        ("2", graph.g2, graph.entity_offset, graph.relation_offset),
    )
    for tag, g, e_off, r_off in sides:
        with open(out / f"ent_ids_{tag}", "w", encoding="utf-8") as fh:
            for i in range(g.num_entities):
                fh.write(f"{i}\t{entity_names.get(i + e_off, f'{g.label.lower()}_entity_{i}')}\n")
        with open(out / f"rel_ids_{tag}", "w", encoding="utf-8") as fh:
            for i in range(g.num_relations):
                fh.write(f"{i}\t{g.label.lower()}_relation_{i}\n")
        with open(out / f"triples_{tag}", "w", encoding="utf-8") as fh:
            for h, r, t in g.triples:
                fh.write(f"{h}\t{r}\t{t}\n")
    with open(out / "ref_ent_ids", "w", encoding="utf-8") as fh:
        for e1, e2 in ref_pairs:
            fh.write(f"{e1}\t{e2 - graph.entity_offset}\n")
    if relation_test is not None and relation_test.pairs:
        with open(out / "ref_rel_ids", "w", encoding="utf-8") as fh:
            for r1, r2 in relation_test.pairs:
                fh.write(f"{r1}\t{r2 - graph.relation_offset}\n")
    if features is not None:
        for tag, g, e_off, _ in sides:
            with open(out / f"ent_features_{tag}", "w", encoding="utf-8") as fh:
                for i in range(g.num_entities):
                    row = " ".join(repr(float(v)) for v in features.matrix[i + e_off])
                    fh.write(f"{i}\t{row}\n")


def _tokenize(name: str) -> list[str]:
    return name.lower().translate(_PUNCT_TABLE).split()


def _load_word_vectors(path, tokens: set[str], dim: int) -> dict[str, np.ndarray]:
    """Scan a token-per-line vector file, keeping only the tokens we need."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing word-vector file: {path}")
    found: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            token = parts[0]
            if token not in tokens or token in found:
                continue
            if len(parts) - 1 != dim:
                raise ConfigError(f"{path}:{line_no}: vector has {len(parts) - 1} values, expected {dim}")
            try:
                found[token] = np.array([float(v) for v in parts[1:]], dtype=np.float64)
            except ValueError:
                raise ParseError(path, line_no, "malformed vector value") from None
    return found


def _fallback_vector(rng_seed: int, gid: int, dim: int) -> np.ndarray:
    rng = derive_rng(rng_seed, f"feature-fallback-{gid}")
    return rng.normal(0.0, FALLBACK_SIGMA, dim)


def build_features(
    graph: MergedGraph,
    names: dict[int, str],
    word_vectors,
    dim: int = 300,
    rng_seed: int = 0,
) -> FeatureTable:
    """Initialize entity features from name-token word vectors.

    Each entity gets the mean of its name tokens' vectors (tokens are
    lowercased and punctuation-stripped); entities whose tokens are all out
    of vocabulary get a deterministic random vector so no row is ever zero.
    """
    if dim <= 0:
        raise ValueError(f"feature dimension must be positive, got {dim}")
    needed = set()
    for gid in range(graph.num_entities):
        needed.update(_tokenize(names.get(gid, "")))
    vocab = _load_word_vectors(word_vectors, needed, dim)

    matrix = np.zeros((graph.num_entities, dim), dtype=np.float64)
    covered = 0
    for gid in range(graph.num_entities):
        hits = [vocab[t] for t in _tokenize(names.get(gid, "")) if t in vocab]
        if hits:
            vec = np.mean(hits, axis=0)
            if np.linalg.norm(vec) > 0.0:
                matrix[gid] = vec
                covered += 1
                continue
        matrix[gid] = _fallback_vector(rng_seed, gid, dim)
    coverage = covered / graph.num_entities if graph.num_entities else 1.0
    return FeatureTable(dim=dim, matrix=matrix, coverage=coverage)


def random_features(graph: MergedGraph, dim: int, rng_seed: int) -> FeatureTable:
    """Random Gaussian features (sigma matching the fallback scale)."""
    if dim <= 0:
        raise ValueError(f"feature dimension must be positive, got {dim}")
    rng = derive_rng(rng_seed, "random-features")
    matrix = rng.normal(0.0, FALLBACK_SIGMA, (graph.num_entities, dim))
    return FeatureTable(dim=dim, matrix=matrix, coverage=0.0)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the generated bilingual benchmark pair."""

    n_entities: int
    n_relations: int
    n_triples: int
    structural_noise: float = 0.0
    feature_noise: float = 0.0
    seed_fraction: float = 0.3
    rng_seed: int = 0
    feature_dim: int = 32

    def __post_init__(self):
        if min(self.n_entities, self.n_relations, self.n_triples, self.feature_dim) <= 0:
            raise ValueError("synthetic counts must be positive")
        for name in ("structural_noise", "feature_noise", "seed_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {v}")
        capacity = self.n_entities * self.n_entities * self.n_relations
        if self.n_triples > capacity:
            raise ValueError(f"n_triples={self.n_triples} exceeds capacity {capacity}")
        if self.n_triples < self.n_relations:
            raise ValueError("need at least one triple per relation")


def _sample_triple(rng, n_entities: int, n_relations: int, relation: int | None = None):
    r = relation if relation is not None else int(rng.integers(n_relations))
    return (int(rng.integers(n_entities)), r, int(rng.integers(n_entities)))


def generate_synthetic(spec: SyntheticSpec) -> tuple[MergedGraph, AlignmentSeeds, RelationTestSet, FeatureTable]:
    """Generate an isomorphic graph pair with controllable structure/feature noise.

    G2 is a relabeled copy of G1 (entity permutation, relations kept in
    order); `structural_noise` of its triples are rewired to fresh random
    triples and every feature vector is perturbed by additive Gaussian noise.
    Ground truth is the relabeling itself.
    """
    ne, nr = spec.n_entities, spec.n_relations
    struct_rng = derive_rng(spec.rng_seed, "synth-structure")
    triples = set()
    for r in range(nr):  # cover every relation first
        while True:
            t = _sample_triple(struct_rng, ne, nr, relation=r)
            if t not in triples:
                triples.add(t)
                break
    while len(triples) < spec.n_triples:
        triples.add(_sample_triple(struct_rng, ne, nr))
    g1_triples = tuple(sorted(triples))

    perm = derive_rng(spec.rng_seed, "synth-permutation").permutation(ne)
    g2_set = {(int(perm[h]), r, int(perm[t])) for h, r, t in g1_triples}
    original_image = frozenset(g2_set)

    n_rewire = int(math.floor(spec.structural_noise * spec.n_triples + 0.5))
    capacity = ne * ne * nr
    if spec.n_triples + n_rewire > capacity:
        raise ValueError("graph too dense to rewire the requested fraction")
    if n_rewire:
        rewire_rng = derive_rng(spec.rng_seed, "synth-rewire")
        ordered = sorted(g2_set)
        victims = rewire_rng.choice(len(ordered), size=n_rewire, replace=False)
        for v in victims:
            g2_set.discard(ordered[v])
        while len(g2_set) < spec.n_triples:
            t = _sample_triple(rewire_rng, ne, nr)
            if t not in original_image and t not in g2_set:
                g2_set.add(t)

    g1 = KnowledgeGraph("G1", ne, nr, g1_triples)
    g2 = KnowledgeGraph("G2", ne, nr, tuple(sorted(g2_set)))
    graph = merge_graphs(g1, g2)

    feat_rng = derive_rng(spec.rng_seed, "synth-features")
    feat1 = feat_rng.normal(0.0, 1.0, (ne, spec.feature_dim))
    noise = feat_rng.normal(0.0, 1.0, (ne, spec.feature_dim)) * spec.feature_noise
    feat2 = np.empty_like(feat1)
    feat2[perm] = feat1 + noise
    features = FeatureTable(dim=spec.feature_dim, matrix=np.vstack([feat1, feat2]))

    true_pairs = tuple((i, int(perm[i]) + ne) for i in range(ne))
    if spec.seed_fraction <= 0.0:
        seeds = AlignmentSeeds(train=(), test=true_pairs, train_fraction=0.0)
    elif spec.seed_fraction >= 1.0:
        seeds = AlignmentSeeds(train=true_pairs, test=(), train_fraction=1.0)
    else:
        seeds = split_seeds(true_pairs, spec.seed_fraction, spec.rng_seed)

    relation_test = RelationTestSet(pairs=tuple((r, r + nr) for r in range(nr)))
    return graph, seeds, relation_test, features
