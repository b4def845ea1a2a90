"""Flat key=value run configuration shared by every command.

The file format is one `key = value` per line (# starts a comment); CLI
`--set key=value` flags override file values, and a handful of dedicated
flags (--seed, --threads) override both. Unknown keys are rejected rather
than ignored so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .model import HgcnConfig
from .training import TrainConfig

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class RunConfig:
    # model architecture
    num_layers: int = 2
    dim: int = 0                    # 0 = take the loaded feature dimension
    relation_dim: int = 0           # 0 = same as dim
    gate_bias_init: float = -1.0
    highway: bool = True
    final_relu: bool = True
    weighted_adjacency: bool = False
    # feature initialization
    feature_init: str = "auto"      # auto | files | word-vectors | random
    word_vectors: str = ""
    feature_dim: int = 300          # used by word-vectors / random init
    # optimization
    gamma: float = 1.0
    beta: float = 20.0
    learning_rate: float = 0.001
    k_neg: int = 125
    resample_interval: int = 50
    max_epochs: int = 300
    pretrain_patience: int = 3
    pretrain_cap: int = -1          # -1 = max_epochs // 2
    optimizer: str = "adam"
    dtype: str = "float32"
    # data split
    train_fraction: float = 0.3
    val_fraction: float = 0.05
    # evaluation
    k_list: str = "1,10"
    candidate_policy: str = "test-counterparts"
    direction: str = "g1_to_g2"
    # execution
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.feature_init not in ("auto", "files", "word-vectors", "random"):
            raise ConfigError(f"unknown feature_init {self.feature_init!r}")
        if self.direction not in ("g1_to_g2", "g2_to_g1"):
            raise ConfigError(f"unknown direction {self.direction!r}")

    def parsed_k_list(self) -> tuple[int, ...]:
        try:
            ks = tuple(int(k) for k in self.k_list.split(","))
        except ValueError:
            raise ConfigError(f"k_list must be comma-separated integers, got {self.k_list!r}") from None
        if not ks or any(k <= 0 for k in ks):
            raise ConfigError(f"k_list entries must be positive, got {self.k_list!r}")
        return ks

    def hgcn_config(self, input_dim: int) -> HgcnConfig:
        dim = self.dim if self.dim > 0 else input_dim
        if dim != input_dim:
            raise ConfigError(f"configured dim={dim} does not match feature dimension {input_dim}")
        rel_dim = self.relation_dim if self.relation_dim > 0 else dim
        return HgcnConfig(
            num_layers=self.num_layers,
            dims=(dim,) * (self.num_layers + 1),
            relation_dim=rel_dim,
            gate_bias_init=self.gate_bias_init,
            highway=self.highway,
            final_relu=self.final_relu,
            rng_seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            gamma=self.gamma,
            beta=self.beta,
            learning_rate=self.learning_rate,
            k_neg=self.k_neg,
            resample_interval=self.resample_interval,
            max_epochs=self.max_epochs,
            pretrain_patience=self.pretrain_patience,
            pretrain_cap=None if self.pretrain_cap < 0 else self.pretrain_cap,
            optimizer=self.optimizer,
            dtype=self.dtype,
            rng_seed=self.seed,
            threads=self.threads,
        )

    def to_dict(self) -> dict[str, str]:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = str(v).lower() if isinstance(v, bool) else str(v)
        return out

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for key, value in self.to_dict().items():
                fh.write(f"{key} = {value}\n")


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, raw: str):
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    target = _FIELDS[key].type
    raw = raw.strip()
    if target == "bool":
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if target == "int":
            return int(raw)
        if target == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {target}, got {raw!r}") from None
    return raw


def parse_config_file(path) -> dict[str, object]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing config file: {path}")
    values: dict[str, object] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value', got {line.rstrip()!r}")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            values[key] = _coerce(key, raw)
    return values


def resolve_config(config_file=None, overrides=None, base: dict[str, str] | None = None) -> RunConfig:
    """Defaults, then `base` string values (e.g. from a checkpoint), then the
    config file, then `key=value` override strings."""
    values: dict[str, object] = {}
    for key, raw in (base or {}).items():
        values[key] = _coerce(key, raw)
    if config_file is not None:
        values.update(parse_config_file(config_file))
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, raw = (part.strip() for part in item.split("=", 1))
        values[key] = _coerce(key, raw)
    return RunConfig(**values)
