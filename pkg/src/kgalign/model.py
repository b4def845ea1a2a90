"""Stacked graph-convolution layers with per-layer highway gating.

Each layer propagates features through the normalized adjacency, applies a
trainable linear map and ReLU, then mixes the result with the layer input
through a sigmoid transform gate. Gate biases start negative so early
training is carry-dominant (the gate mostly passes the input through).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .adjacency import NormalizedAdjacency
from .autodiff import Node, Tape
from .errors import ConfigError, ShapeError
from .rng import derive_rng

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class HgcnConfig:
    """Architecture of the entity encoder.

    `dims` lists the feature width entering each layer plus the output width
    (length num_layers + 1). Highway gating mixes same-shaped tensors, so it
    requires all dims equal; disable it to run the plain-GCN variant.
    """

    num_layers: int = 2
    dims: tuple[int, ...] = (300, 300, 300)
    relation_dim: int = 300
    gate_bias_init: float = -1.0
    highway: bool = True
    final_relu: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_layers < 1:
            raise ConfigError(f"num_layers must be >= 1, got {self.num_layers}")
        if len(self.dims) != self.num_layers + 1:
            raise ConfigError(f"dims must have num_layers+1={self.num_layers + 1} entries, got {len(self.dims)}")
        if any(d <= 0 for d in self.dims) or self.relation_dim <= 0:
            raise ConfigError("all feature dimensions must be positive")
        if self.highway and len(set(self.dims)) != 1:
            raise ConfigError("highway gating requires equal dims at every layer")

    @classmethod
    def uniform(cls, dim: int, num_layers: int = 2, **kwargs) -> "HgcnConfig":
        return cls(num_layers=num_layers, dims=(dim,) * (num_layers + 1), **kwargs)

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    @property
    def output_dim(self) -> int:
        return self.dims[-1]


@dataclass
class ModelParams:
    """All trainable tensors, kept as plain numpy arrays between epochs."""

    layer_weights: list[np.ndarray]
    gate_weights: list[np.ndarray]
    gate_biases: list[np.ndarray]
    relation_transform: np.ndarray

    def named(self):
        for l, w in enumerate(self.layer_weights):
            yield f"layer_weight_{l}", w
        for l, w in enumerate(self.gate_weights):
            yield f"gate_weight_{l}", w
        for l, b in enumerate(self.gate_biases):
            yield f"gate_bias_{l}", b
        yield "relation_transform", self.relation_transform

    def copy(self) -> "ModelParams":
        return ModelParams(
            layer_weights=[w.copy() for w in self.layer_weights],
            gate_weights=[w.copy() for w in self.gate_weights],
            gate_biases=[b.copy() for b in self.gate_biases],
            relation_transform=self.relation_transform.copy(),
        )


def _glorot(rng, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (fan_in, fan_out))


def init_params(config: HgcnConfig) -> ModelParams:
    """Glorot-uniform weights, constant gate biases; deterministic per seed."""
    layer_weights, gate_weights, gate_biases = [], [], []
    for l in range(config.num_layers):
        d_in, d_out = config.dims[l], config.dims[l + 1]
        layer_weights.append(_glorot(derive_rng(config.rng_seed, f"init-layer-{l}"), d_in, d_out))
        if config.highway:
            gate_weights.append(_glorot(derive_rng(config.rng_seed, f"init-gate-{l}"), d_in, d_in))
            gate_biases.append(np.full((1, d_in), config.gate_bias_init, dtype=np.float64))
    relation_transform = _glorot(
        derive_rng(config.rng_seed, "init-relation-transform"),
        2 * config.output_dim,
        config.relation_dim,
    )
    return ModelParams(
        layer_weights=layer_weights,
        gate_weights=gate_weights,
        gate_biases=gate_biases,
        relation_transform=relation_transform,
    )


def validate_params(config: HgcnConfig, params: ModelParams) -> None:
    expect_layers = config.num_layers
    if len(params.layer_weights) != expect_layers:
        raise ShapeError(f"expected {expect_layers} layer weights, got {len(params.layer_weights)}")
    for l, w in enumerate(params.layer_weights):
        want = (config.dims[l], config.dims[l + 1])
        if w.shape != want:
            raise ShapeError(f"layer {l} weight shape {w.shape}, expected {want}")
    if config.highway and len(params.gate_weights) != expect_layers:
        raise ShapeError("highway config requires one gate per layer")
    if params.relation_transform.shape != (2 * config.output_dim, config.relation_dim):
        raise ShapeError(
            f"relation transform shape {params.relation_transform.shape}, "
            f"expected {(2 * config.output_dim, config.relation_dim)}"
        )


def gcn_layer(tape: Tape, x: Node, adj: NormalizedAdjacency, w: Node, activation: bool = True, layer: int = 0) -> Node:
    """One propagation step: activation(adjacency @ x @ w)."""
    propagated = tape.spmm(adj.matrix, x, name=f"propagate_{layer}")
    projected = tape.matmul(propagated, w, name=f"project_{layer}")
    if not activation:
        return projected
    return tape.relu(projected, name=f"activate_{layer}")


def highway_combine(tape: Tape, x_in: Node, x_new: Node, w_t: Node, b_t: Node, layer: int = 0) -> Node:
    """Sigmoid-gated convex mix of a layer's input and output."""
    if x_in.shape != x_new.shape:
        raise ConfigError(f"highway gate needs equal shapes, got {x_in.shape} vs {x_new.shape}")
    gate = tape.sigmoid(
        tape.add_row(tape.matmul(x_in, w_t, name=f"gate_project_{layer}"), b_t, name=f"gate_shift_{layer}"),
        name=f"gate_{layer}",
    )
    transformed = tape.mul(gate, x_new, name=f"gate_transform_{layer}")
    carried = tape.mul(tape.scalar_minus(1.0, gate, name=f"gate_complement_{layer}"), x_in, name=f"gate_carry_{layer}")
    return tape.add(transformed, carried, name=f"highway_{layer}")


def bind_params(tape: Tape, params: ModelParams) -> dict[str, Node]:
    """Register every parameter tensor as a trainable leaf on the tape."""
    return {name: tape.var(arr, name=name) for name, arr in params.named()}


def forward(
    tape: Tape,
    params: ModelParams,
    config: HgcnConfig,
    features,
    adj: NormalizedAdjacency,
    bound: dict[str, Node] | None = None,
) -> Node:
    """Full encoder pass; returns the output entity representations.

    `features` may be a raw matrix (treated as a constant input) or an
    existing tape node when gradients with respect to the input are wanted.
    Pass `bound` (from bind_params) to keep handles on the parameter nodes,
    e.g. for reading gradients after backward.
    """
    x = features if isinstance(features, Node) else tape.const(features, name="features")
    if x.shape[1] != config.input_dim:
        raise ShapeError(f"feature dim {x.shape[1]} does not match config input dim {config.input_dim}")
    if bound is None:
        bound = bind_params(tape, params)
    for l in range(config.num_layers):
        last = l == config.num_layers - 1
        x_new = gcn_layer(tape, x, adj, bound[f"layer_weight_{l}"], activation=config.final_relu or not last, layer=l)
        if config.highway:
            x = highway_combine(tape, x, x_new, bound[f"gate_weight_{l}"], bound[f"gate_bias_{l}"], layer=l)
        else:
            x = x_new
    return x


def forward_values(params: ModelParams, config: HgcnConfig, features, adj: NormalizedAdjacency, dtype=np.float64) -> np.ndarray:
    """Convenience forward pass that returns a plain array (no gradients kept)."""
    tape = Tape(dtype)
    matrix = features.matrix if hasattr(features, "matrix") else features
    return forward(tape, params, config, matrix, adj).value


def save_checkpoint(path, config: HgcnConfig, params: ModelParams, rng_state: dict | None = None, extra: dict | None = None) -> None:
    """Versioned container: architecture, every parameter tensor, RNG state."""
    arrays = dict(params.named())
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(config),
        "param_names": list(arrays),
        "rng_state": rng_state,
        "extra": extra or {},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8), **arrays)


def load_checkpoint(path) -> tuple[HgcnConfig, ModelParams, dict | None, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing checkpoint: {path}")
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {meta.get('version')}")
        cfg_dict = meta["config"]
        cfg_dict["dims"] = tuple(cfg_dict["dims"])
        config = HgcnConfig(**cfg_dict)
        arrays = {name: data[name] for name in meta["param_names"]}
    n = config.num_layers
    params = ModelParams(
        layer_weights=[arrays[f"layer_weight_{l}"] for l in range(n)],
        gate_weights=[arrays[f"gate_weight_{l}"] for l in range(n)] if config.highway else [],
        gate_biases=[arrays[f"gate_bias_{l}"] for l in range(n)] if config.highway else [],
        relation_transform=arrays["relation_transform"],
    )
    validate_params(config, params)
    return config, params, meta.get("rng_state"), meta.get("extra", {})
