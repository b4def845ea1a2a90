"""Margin training objective, hard-negative mining, and the two-stage loop.

Stage one optimizes the hinge objective on the encoder outputs until
validation performance stops improving; stage two switches the objective to
the joint entity representations (entity embedding plus relation context)
and continues until the epoch budget runs out. Negatives are re-mined on
the encoder outputs at a fixed epoch interval in both stages and carried
across the stage switch.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .adjacency import NormalizedAdjacency
from .autodiff import Node, Tape
from .datasets import FeatureTable
from .errors import ConfigError, NumericalError
from .kg import AlignmentSeeds, MergedGraph
from .model import HgcnConfig, ModelParams, bind_params, forward, init_params, save_checkpoint
from .relations import RelationIncidence, approximate_relations, joint_entities

log = logging.getLogger(__name__)

STAGE_PRELIMINARY = "preliminary"
STAGE_JOINT = "joint"


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 1.0                 # hinge margin
    beta: float = 20.0                 # relation-alignment bonus weight
    learning_rate: float = 0.001
    k_neg: int = 125                   # negatives per positive, per direction
    resample_interval: int = 50        # epochs between negative re-mining
    max_epochs: int = 300
    pretrain_patience: int = 3         # non-improving evaluations before stage switch
    pretrain_cap: int | None = None    # hard epoch cap for stage one (default max_epochs // 2)
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    dtype: str = "float32"
    rng_seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.gamma <= 0:
            raise ConfigError(f"margin must be positive, got {self.gamma}")
        if self.beta < 0:
            raise ConfigError(f"beta must be non-negative, got {self.beta}")
        if self.k_neg < 1:
            raise ConfigError(f"k_neg must be >= 1, got {self.k_neg}")
        if self.resample_interval < 1:
            raise ConfigError(f"resample_interval must be >= 1, got {self.resample_interval}")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    @property
    def effective_pretrain_cap(self) -> int:
        return self.pretrain_cap if self.pretrain_cap is not None else self.max_epochs // 2


@dataclass(frozen=True)
class NegativeSet:
    """Hard negatives, flattened: negative i pairs (left[i], right[i]) and
    belongs to positive number owner[i]."""

    owner: np.ndarray
    left: np.ndarray
    right: np.ndarray
    epoch: int

    def __len__(self):
        return len(self.owner)

    def pairs_for(self, positive_index: int):
        mask = self.owner == positive_index
        return list(zip(self.left[mask].tolist(), self.right[mask].tolist()))


def _nearest_excluding(emb: np.ndarray, anchors: np.ndarray, pool_ids: np.ndarray,
                       excluded: np.ndarray, k: int, threads: int) -> np.ndarray:
    """k nearest pool entities per anchor (L1, ties by id), skipping one id each."""
    pool = emb[pool_ids]

    def one_chunk(s: int, e: int) -> np.ndarray:
        dist = cdist(emb[anchors[s:e]], pool, metric="cityblock")
        out = np.empty((e - s, k), dtype=np.int64)
        for i in range(e - s):
            order = np.lexsort((pool_ids, dist[i]))
            ordered = pool_ids[order]
            keep = ordered[ordered != excluded[s + i]][:k]
            out[i] = keep
        return out

    chunk = 512
    spans = [(s, min(s + chunk, len(anchors))) for s in range(0, len(anchors), chunk)]
    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool_exec:
            parts = list(pool_exec.map(lambda sp: one_chunk(*sp), spans))
    else:
        parts = [one_chunk(*sp) for sp in spans]
    return np.vstack(parts) if parts else np.zeros((0, k), dtype=np.int64)


def mine_negatives(
    embeddings: np.ndarray,
    positives,
    k_neg: int,
    graph: MergedGraph,
    epoch: int = 0,
    threads: int = 1,
) -> NegativeSet:
    """Per positive pair, corrupt each side with its k nearest cross-graph entities.

    For (p, q): the k_neg G2 entities nearest to p (excluding q itself) form
    (p, q') negatives, and the k_neg G1 entities nearest to q (excluding p)
    form (p', q). Distances use the current embeddings; ties break by id.
    """
    positives = list(positives)
    if not positives:
        raise ValueError("cannot mine negatives for an empty positive set")
    n1 = graph.entity_offset
    n2 = graph.num_entities - n1
    if k_neg >= n2 or k_neg >= n1:
        raise ValueError(f"k_neg={k_neg} must be smaller than both candidate pools ({n1}, {n2})")
    ps = np.asarray([p for p, _ in positives], dtype=np.int64)
    qs = np.asarray([q for _, q in positives], dtype=np.int64)
    g1_ids = np.arange(0, n1, dtype=np.int64)
    g2_ids = np.arange(n1, graph.num_entities, dtype=np.int64)

    q_neg = _nearest_excluding(embeddings, ps, g2_ids, qs, k_neg, threads)  # (p, q')
    p_neg = _nearest_excluding(embeddings, qs, g1_ids, ps, k_neg, threads)  # (p', q)

    owner = np.repeat(np.arange(len(positives), dtype=np.int64), 2 * k_neg)
    left = np.hstack([np.repeat(ps, k_neg).reshape(-1, k_neg), p_neg]).reshape(-1)
    right = np.hstack([q_neg, np.repeat(qs, k_neg).reshape(-1, k_neg)]).reshape(-1)
    return NegativeSet(owner=owner, left=left, right=right, epoch=epoch)


def margin_loss(tape: Tape, embeddings: Node, positives, negatives: NegativeSet, gamma: float) -> Node:
    """Hinge objective: sum over positives and their negatives of
    max(0, d(positive) - d(negative) + gamma), with rowwise L1 distances."""
    positives = list(positives)
    if not positives:
        raise ValueError("margin loss requires at least one positive pair")
    if gamma <= 0:
        raise ValueError(f"margin must be positive, got {gamma}")
    p_idx = np.asarray([p for p, _ in positives], dtype=np.int64)
    q_idx = np.asarray([q for _, q in positives], dtype=np.int64)
    d_pos = tape.l1_rowdist(embeddings, p_idx, q_idx, name="positive_distance")
    d_neg = tape.l1_rowdist(embeddings, negatives.left, negatives.right, name="negative_distance")
    d_pos_per_neg = tape.gather_rows(d_pos, negatives.owner, name="positive_per_negative")
    hinge = tape.relu(
        tape.add_scalar(tape.sub(d_pos_per_neg, d_neg, name="rank_gap"), gamma, name="shift_margin"),
        name="hinge",
    )
    return tape.sum_all(hinge, name="margin_loss")


class Adam:
    """Standard Adam on named parameter arrays, updated in place."""

    def __init__(self, params: ModelParams, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(arr) for name, arr in params.named()}
        self.v = {name: np.zeros_like(arr) for name, arr in params.named()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        correction1 = 1.0 - b1**self.t
        correction2 = 1.0 - b2**self.t
        for name, arr in self.params.named():
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(arr)
            g = g.astype(arr.dtype, copy=False)
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            arr -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


class Sgd:
    def __init__(self, params: ModelParams, lr: float):
        self.params = params
        self.lr = lr

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name, arr in self.params.named():
            g = grads.get(name)
            if g is not None:
                arr -= self.lr * g.astype(arr.dtype, copy=False)


@dataclass
class EpochRecord:
    epoch: int
    stage: str
    loss: float
    val_hits1: float | None
    wall_ms: float

    def as_line(self) -> str:
        val = "" if self.val_hits1 is None else f"{self.val_hits1:.4f}"
        return f"{self.epoch},{self.stage},{self.loss:.6f},{val},{self.wall_ms:.1f}"


@dataclass
class TrainResult:
    params: ModelParams
    pretrain_params: ModelParams
    config: HgcnConfig
    log: list[EpochRecord] = field(default_factory=list)
    stage_switch_epoch: int = 0
    grad_activity: dict[str, dict[str, float]] = field(default_factory=dict)


def _validation_hits1(embeddings: np.ndarray, val_pairs) -> float:
    from .evaluation import align_entities  # local import: evaluation pulls in the sweep

    report = align_entities(embeddings, val_pairs, k_list=(1,))
    return report.hits[1]


def train(
    graph: MergedGraph,
    adj: NormalizedAdjacency,
    features: FeatureTable,
    seeds: AlignmentSeeds,
    hgcn_config: HgcnConfig,
    train_config: TrainConfig,
    out_dir=None,
    checkpoint_extra: dict | None = None,
) -> TrainResult:
    """Run the full two-stage optimization and return final parameters.

    Stage one trains on encoder outputs until the validation signal has not
    improved for `pretrain_patience` consecutive evaluations (falling back to
    the training loss when no validation pairs exist) or the stage cap is
    hit. Stage two continues on the joint representations until max_epochs.
    Checkpoints and a line-per-epoch log are written when out_dir is given.
    """
    if not seeds.train:
        raise ValueError("training requires a non-empty train seed set")
    cfg = train_config
    dtype = cfg.np_dtype
    params = init_params(hgcn_config)
    params = ModelParams(
        layer_weights=[w.astype(dtype) for w in params.layer_weights],
        gate_weights=[w.astype(dtype) for w in params.gate_weights],
        gate_biases=[b.astype(dtype) for b in params.gate_biases],
        relation_transform=params.relation_transform.astype(dtype),
    )
    incidence = RelationIncidence(graph)
    feat_matrix = features.matrix.astype(dtype)
    train_pairs = list(seeds.train)
    val_pairs = list(seeds.validation)

    if cfg.optimizer == "adam":
        optimizer = Adam(params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    else:
        optimizer = Sgd(params, cfg.learning_rate)

    out_path = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        log_fh = open(out_path / "training_log.csv", "w", encoding="utf-8")
        log_fh.write("epoch,stage,loss,val_hits1,wall_ms\n")

    result = TrainResult(params=params, pretrain_params=params, config=hgcn_config)
    result.grad_activity = {STAGE_PRELIMINARY: {}, STAGE_JOINT: {}}
    negatives: NegativeSet | None = None
    epoch = 0

    def run_epoch(stage: str) -> tuple[float, float | None]:
        nonlocal negatives
        start = time.perf_counter()
        tape = Tape(dtype)
        bound = bind_params(tape, params)
        x_prime = forward(tape, params, hgcn_config, feat_matrix, adj, bound=bound)
        if epoch % cfg.resample_interval == 0 or negatives is None:
            negatives = mine_negatives(x_prime.value, train_pairs, cfg.k_neg, graph, epoch, cfg.threads)
        if stage == STAGE_PRELIMINARY:
            objective_emb = x_prime
        else:
            rel_vec = approximate_relations(tape, x_prime, graph, bound["relation_transform"], incidence)
            objective_emb = joint_entities(tape, x_prime, rel_vec, graph, incidence)
        loss = margin_loss(tape, objective_emb, train_pairs, negatives, cfg.gamma)
        loss_value = float(loss.value[0, 0])
        if not np.isfinite(loss_value):
            tape.check_finite()
            raise NumericalError(f"non-finite loss at epoch {epoch}")
        tape.backward(loss)
        grads = {}
        activity = result.grad_activity[stage]
        for name in dict(params.named()):
            g = bound[name].grad
            if g is not None:
                grads[name] = g
                activity[name] = max(activity.get(name, 0.0), float(np.abs(g).max()))
        optimizer.step(grads)

        val = None
        if epoch % cfg.resample_interval == 0 and val_pairs:
            val = _validation_hits1(objective_emb.value, val_pairs)
        wall_ms = (time.perf_counter() - start) * 1000.0
        record = EpochRecord(epoch=epoch, stage=stage, loss=loss_value, val_hits1=val, wall_ms=wall_ms)
        result.log.append(record)
        if log_fh is not None:
            log_fh.write(record.as_line() + "\n")
        if out_path is not None and epoch % cfg.resample_interval == 0 and epoch > 0:
            save_checkpoint(out_path / f"checkpoint_epoch_{epoch}.npz", hgcn_config, params, extra=checkpoint_extra)
        return loss_value, val

    try:
        # stage one: run until the alignment signal stops improving
        best_metric = -np.inf
        stale = 0
        stage1_epochs = 0
        cap = cfg.effective_pretrain_cap
        while stage1_epochs < cap and stale < cfg.pretrain_patience:
            loss_value, val = run_epoch(STAGE_PRELIMINARY)
            if epoch % cfg.resample_interval == 0:
                metric = val if val is not None else -loss_value
                if metric > best_metric + 1e-12:
                    best_metric = metric
                    stale = 0
                else:
                    stale += 1
            epoch += 1
            stage1_epochs += 1

        result.stage_switch_epoch = epoch
        result.pretrain_params = params.copy()
        if out_path is not None:
            save_checkpoint(out_path / "checkpoint_pretrain.npz", hgcn_config, result.pretrain_params, extra=checkpoint_extra)

        # stage two: joint objective for the remaining epoch budget
        while epoch < cfg.max_epochs:
            run_epoch(STAGE_JOINT)
            epoch += 1

        if out_path is not None:
            save_checkpoint(out_path / "checkpoint_final.npz", hgcn_config, params, extra=checkpoint_extra)
    finally:
        if log_fh is not None:
            log_fh.close()

    result.params = params
    log.info("training finished after %d epochs (stage switch at %d)", epoch, result.stage_switch_epoch)
    return result
