"""Command-line entry point.

Commands: prepare (validate/re-index a dataset), synth (generate a synthetic
benchmark pair), train (two-stage optimization), align (alignment reports
from a checkpoint), eval (Hits@k tables, stage diagnostics, seed-ratio
sweep). Every command is one process; on failure it prints a single
machine-parseable `error: <code>: <message>` line and exits with a
code-specific status. No command mutates its input dataset directory.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .adjacency import build_adjacency
from .config import RunConfig, resolve_config
from .datasets import (
    FeatureTable,
    LoadedDataset,
    SyntheticSpec,
    build_features,
    generate_synthetic,
    load_dbp15k,
    random_features,
    write_dataset,
)
from .errors import ConfigError, KgAlignError
from .evaluation import seed_ratio_sweep, write_sweep_csv
from .kg import split_seeds
from .model import load_checkpoint
from .pipeline import embed, evaluate_result
from .training import TrainResult, train

EXIT_CODES = {
    "argument": 2,
    "config": 2,
    "io": 3,
    "parse": 4,
    "structural": 5,
    "shape": 6,
    "numerical": 7,
}


def _resolve_features(ds: LoadedDataset, cfg: RunConfig) -> FeatureTable:
    mode = cfg.feature_init
    if mode == "auto":
        if ds.features is not None:
            mode = "files"
        elif cfg.word_vectors:
            mode = "word-vectors"
        else:
            mode = "random"
    if mode == "files":
        if ds.features is None:
            raise ConfigError("feature_init=files but the dataset has no ent_features_* files")
        return ds.features
    if mode == "word-vectors":
        if not cfg.word_vectors:
            raise ConfigError("feature_init=word-vectors requires the word_vectors path")
        return build_features(ds.graph, ds.entity_names, cfg.word_vectors, cfg.feature_dim, cfg.seed)
    return random_features(ds.graph, cfg.feature_dim, cfg.seed)


def _write_summary(out_dir: Path, lines) -> None:
    with open(out_dir / "summary.txt", "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")
        fh.flush()
    for line in lines:
        print(line)


def cmd_prepare(args) -> None:
    ds = load_dbp15k(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(out, ds.graph, ds.ref_pairs, ds.relation_test, ds.entity_names, ds.features)
    if args.dump_adjacency:
        adj = build_adjacency(ds.graph)
        adj.matrix.dump_coo(out / "adjacency.coo")
    g1, g2 = ds.graph.g1, ds.graph.g2
    lines = [
        f"g1_entities = {g1.num_entities}",
        f"g1_relations = {g1.num_relations}",
        f"g1_triples = {len(g1.triples)}",
        f"g2_entities = {g2.num_entities}",
        f"g2_relations = {g2.num_relations}",
        f"g2_triples = {len(g2.triples)}",
        f"total_entities = {ds.graph.num_entities}",
        f"reference_entity_pairs = {len(ds.ref_pairs)}",
        f"reference_relation_pairs = {len(ds.relation_test.pairs)}",
        f"has_feature_files = {str(ds.features is not None).lower()}",
    ]
    _write_summary(out, lines)


def cmd_synth(args) -> None:
    spec = SyntheticSpec(
        n_entities=args.entities,
        n_relations=args.relations,
        n_triples=args.triples,
        structural_noise=args.structural_noise,
        feature_noise=args.feature_noise,
        seed_fraction=args.seed_fraction,
        rng_seed=args.seed,
        feature_dim=args.feature_dim,
    )
    graph, seeds, relation_test, features = generate_synthetic(spec)
    out = Path(args.out)
    write_dataset(out, graph, seeds.pairs, relation_test, features=features)
    _write_summary(out, [
        f"entities_per_graph = {spec.n_entities}",
        f"relations_per_graph = {spec.n_relations}",
        f"triples_per_graph = {spec.n_triples}",
        f"structural_noise = {spec.structural_noise}",
        f"feature_noise = {spec.feature_noise}",
        f"reference_entity_pairs = {len(seeds.pairs)}",
    ])


def _prepare_run(args, base: dict | None = None):
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.threads is not None:
        overrides.append(f"threads={args.threads}")
    cfg = resolve_config(args.config, overrides, base=base)
    ds = load_dbp15k(args.data)
    features = _resolve_features(ds, cfg)
    seeds = split_seeds(ds.ref_pairs, cfg.train_fraction, cfg.seed, cfg.val_fraction)
    adj = build_adjacency(ds.graph, weighted=cfg.weighted_adjacency)
    return cfg, ds, features, seeds, adj


def cmd_train(args) -> None:
    cfg, ds, features, seeds, adj = _prepare_run(args)
    hgcn_cfg = cfg.hgcn_config(features.dim)
    train_cfg = cfg.train_config()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / "resolved_config.txt")
    result = train(
        ds.graph, adj, features, seeds, hgcn_cfg, train_cfg,
        out_dir=out, checkpoint_extra={"run_config": cfg.to_dict()},
    )
    emb = embed(ds.graph, result.params, hgcn_cfg, features, adj)
    np.savez(
        out / "embeddings.npz",
        x_prime=emb.x_prime,
        relation=emb.relation_matrix,
        joint=emb.joint,
    )
    scores = evaluate_result(
        ds.graph, result, features, adj, seeds, ds.relation_test,
        cfg.beta, cfg.parsed_k_list(), cfg.candidate_policy, cfg.direction, cfg.threads,
    )
    lines = [
        f"epochs = {len(result.log)}",
        f"stage_switch_epoch = {result.stage_switch_epoch}",
        f"final_loss = {result.log[-1].loss:.6f}" if result.log else "final_loss = nan",
    ]
    lines.extend(scores.summary_lines())
    _write_summary(out, lines)


def _load_run_from_checkpoint(args):
    config, params, _, extra = load_checkpoint(args.checkpoint)
    base = extra.get("run_config") if isinstance(extra, dict) else None
    cfg, ds, features, seeds, adj = _prepare_run(args, base=base)
    hgcn_cfg = cfg.hgcn_config(features.dim)
    if hgcn_cfg != config:
        # the checkpoint's architecture wins; the run config only steers data handling
        hgcn_cfg = config
    return cfg, ds, features, seeds, adj, hgcn_cfg, params


def cmd_align(args) -> None:
    cfg, ds, features, seeds, adj, hgcn_cfg, params = _load_run_from_checkpoint(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = TrainResult(params=params, pretrain_params=params, config=hgcn_cfg)
    scores = evaluate_result(
        ds.graph, result, features, adj, seeds, ds.relation_test,
        cfg.beta, cfg.parsed_k_list(), cfg.candidate_policy, cfg.direction, cfg.threads,
        with_statistics=False,
    )
    scores.entity_joint.write_tsv(out / "entity_alignment.tsv")
    lines = list(scores.entity_joint.summary_lines())
    if scores.relation_joint is not None:
        scores.relation_joint.write_tsv(out / "relation_alignment.tsv")
        lines.extend(scores.relation_joint.summary_lines())
    _write_summary(out, lines)


def cmd_eval(args) -> None:
    cfg, ds, features, seeds, adj, hgcn_cfg, params = _load_run_from_checkpoint(args)
    pretrain_params = params
    pretrain_path = args.pretrain_checkpoint
    if pretrain_path is None:
        sibling = Path(args.checkpoint).parent / "checkpoint_pretrain.npz"
        pretrain_path = sibling if sibling.exists() else None
    if pretrain_path is not None:
        _, pretrain_params, _, _ = load_checkpoint(pretrain_path)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = TrainResult(params=params, pretrain_params=pretrain_params, config=hgcn_cfg)
    scores = evaluate_result(
        ds.graph, result, features, adj, seeds, ds.relation_test,
        cfg.beta, cfg.parsed_k_list(), cfg.candidate_policy, cfg.direction, cfg.threads,
    )
    scores.entity_joint.write_tsv(out / "entity_alignment.tsv")
    if scores.relation_joint is not None:
        scores.relation_joint.write_tsv(out / "relation_alignment.tsv")
    lines = scores.summary_lines()
    if args.sweep:
        ratios = [float(r) for r in args.sweep.split(",")]
        rows = seed_ratio_sweep(
            ds.graph, ds.ref_pairs, ds.relation_test, features,
            hgcn_cfg, cfg.train_config(), ratios, val_fraction=cfg.val_fraction,
        )
        write_sweep_csv(rows, out / "sweep.csv")
        lines.extend(f"sweep {row.as_csv()}" for row in rows)
    _write_summary(out, lines)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--seed", type=int, default=None, help="root RNG seed (overrides config)")
    p.add_argument("--threads", type=int, default=None, help="worker-thread cap (overrides config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgalign", description="Cross-graph entity/relation alignment toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="validate, re-index, and re-emit a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-adjacency", action="store_true", help="also dump the normalized adjacency in COO text form")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("synth", help="generate a synthetic aligned graph pair")
    p.add_argument("--out", required=True)
    p.add_argument("--entities", type=int, default=200)
    p.add_argument("--relations", type=int, default=10)
    p.add_argument("--triples", type=int, default=600)
    p.add_argument("--structural-noise", type=float, default=0.0)
    p.add_argument("--feature-noise", type=float, default=0.0)
    p.add_argument("--seed-fraction", type=float, default=0.3)
    p.add_argument("--feature-dim", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="run the two-stage training loop")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("align", help="alignment reports from a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    _add_run_flags(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("eval", help="Hits@k tables, stage diagnostics, optional seed-ratio sweep")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pretrain-checkpoint", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--sweep", default=None, metavar="R1,R2,...", help="retrain per seed ratio and emit sweep.csv")
    _add_run_flags(p)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except KgAlignError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.code, 1)
    except ValueError as exc:
        print(f"error: argument: {exc}", file=sys.stderr)
        return EXIT_CODES["argument"]
    except FileNotFoundError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]
    return 0


if __name__ == "__main__":
    sys.exit(main())
