"""Cross-graph entity and relation alignment with a highway-gated GCN."""

from .adjacency import NormalizedAdjacency, build_adjacency
from .autodiff import GroupMap, SparseMatrix, Tape, grad_check
from .datasets import (
    FeatureTable,
    SyntheticSpec,
    build_features,
    generate_synthetic,
    load_dbp15k,
    random_features,
    write_dataset,
)
from .evaluation import align_entities, alignment_statistics, seed_ratio_sweep
from .kg import (
    AlignmentSeeds,
    KnowledgeGraph,
    MergedGraph,
    RelationTestSet,
    incident_relations,
    merge_graphs,
    relation_endpoints,
    split_seeds,
)
from .model import HgcnConfig, ModelParams, forward, init_params, load_checkpoint, save_checkpoint
from .relations import (
    RelationEmbeddings,
    align_relations,
    approximate_relations,
    joint_entities,
    relation_distance,
)
from .training import NegativeSet, TrainConfig, margin_loss, mine_negatives, train

__version__ = "0.1.0"

__all__ = [
    "AlignmentSeeds",
    "FeatureTable",
    "GroupMap",
    "HgcnConfig",
    "KnowledgeGraph",
    "MergedGraph",
    "ModelParams",
    "NegativeSet",
    "NormalizedAdjacency",
    "RelationEmbeddings",
    "RelationTestSet",
    "SparseMatrix",
    "SyntheticSpec",
    "Tape",
    "TrainConfig",
    "align_entities",
    "align_relations",
    "alignment_statistics",
    "approximate_relations",
    "build_adjacency",
    "build_features",
    "forward",
    "generate_synthetic",
    "grad_check",
    "incident_relations",
    "init_params",
    "joint_entities",
    "load_checkpoint",
    "load_dbp15k",
    "margin_loss",
    "merge_graphs",
    "mine_negatives",
    "random_features",
    "relation_distance",
    "relation_endpoints",
    "save_checkpoint",
    "seed_ratio_sweep",
    "split_seeds",
    "train",
    "write_dataset",
]
