"""Command-line front end.

Subcommands:
    partition  materialize the federation's shards and test split as CSV
    run        execute one configured simulation
    ablate     run the 2x2 margin/principal grid and print a comparison
    inspect    summarize a metrics.jsonl produced by `run`

Exit codes: 0 success, 2 config error, 3 client divergence, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .datasets import save_csv
from .errors import ConfigError, DivergenceError
from .metrics import load_metrics
from .simulation import (
    DataConfig,
    ModelConfig,
    RunConfig,
    build_federation,
    run,
    run_ablation,
)
from .training import LocalConfig
from .datasets import FederationSpec
from .aggregation import AggregationMode


def default_config() -> RunConfig:
    """A small benchmark that exercises every mechanism in seconds."""
    return RunConfig(
        federation=FederationSpec(
            num_clients=10, dirichlet_alpha=0.1, shortcut_strength=0.9, seed=0
        ),
        local=LocalConfig(learning_rate=0.05, batch_size=50, local_epochs=1,
                          margin_weight=0.03, seed=0),
        mode=AggregationMode(kind="principal"),
        data=DataConfig(classes=4, samples=4000, input_dim=10),
        model=ModelConfig(kind="softmax"),
        rounds=50,
        decompose_every=5,
        seed=0,
    )


def _load_config(args) -> RunConfig:
    if args.config is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                cfg = RunConfig.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc})") from exc
    else:
        cfg = default_config()

    if getattr(args, "mode", None) is not None:
        cfg = replace(cfg, mode=replace(cfg.mode, kind=args.mode))
    if getattr(args, "revision", None) is not None:
        cfg = replace(cfg, mode=replace(cfg.mode, revision=args.revision))
    if getattr(args, "margin_weight", None) is not None:
        cfg = replace(cfg, local=replace(cfg.local, margin_weight=args.margin_weight))
    if getattr(args, "prox_mu", None) is not None:
        cfg = replace(cfg, local=replace(cfg.local, prox_mu=args.prox_mu))
    if getattr(args, "decompose_every", None) is not None:
        cfg = replace(cfg, decompose_every=args.decompose_every)
    if getattr(args, "rounds", None) is not None:
        cfg = replace(cfg, rounds=args.rounds)
    if getattr(args, "output_dir", None) is not None:
        cfg = replace(cfg, output_dir=args.output_dir)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _cmd_partition(args) -> int:
    cfg = _load_config(args)
    if cfg.output_dir is None:
        raise ConfigError("partition needs --output-dir (or output_dir in the config)")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    shards, test_x, test_y, arch = build_federation(cfg)
    files = []
    for shard in shards:
        name = f"client_{shard.client_id:03d}.csv"
        save_csv(out / name, shard.features, shard.labels)
        files.append(name)
    save_csv(out / "test.csv", test_x, test_y)
    manifest = {
        "num_clients": cfg.federation.num_clients,
        "dirichlet_alpha": cfg.federation.dirichlet_alpha,
        "shortcut_strength": cfg.federation.shortcut_strength,
        "seed": cfg.federation.seed,
        "label_column": "label",
        "input_dim": arch.input_dim,
        "num_classes": arch.num_classes,
        "client_files": files,
        "test_file": "test.csv",
        "shard_sizes": [s.n_samples for s in shards],
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(files)} shards + test split to {out}")
    return 0


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    summary = run(cfg)
    print(
        f"rounds={summary.rounds_completed} "
        f"final_accuracy={summary.final_accuracy:.4f} "
        f"best_accuracy={summary.best_accuracy:.4f}"
    )
    if summary.metrics_path:
        print(f"metrics: {summary.metrics_path}")
    if summary.persisted_partial:
        print("warning: metrics persistence was interrupted", file=sys.stderr)
        return 4
    return 0


def _cmd_ablate(args) -> int:
    cfg = _load_config(args)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    results = run_ablation(cfg, seeds=seeds)
    print(f"{'cell':<16} {'margin':<8} {'principal':<10} {'mean final acc':<15} {'mean best acc'}")
    print("-" * 62)
    layout = {
        "fedavg": ("off", "off"),
        "principal_only": ("off", "on"),
        "margin_only": ("on", "off"),
        "full": ("on", "on"),
    }
    for name, summaries in results.items():
        margin, principal = layout[name]
        finals = [s.final_accuracy for s in summaries]
        bests = [s.best_accuracy for s in summaries]
        print(
            f"{name:<16} {margin:<8} {principal:<10} "
            f"{np.mean(finals):<15.4f} {np.mean(bests):.4f}"
        )
    if any(s.persisted_partial for ss in results.values() for s in ss):
        return 4
    return 0


def _cmd_inspect(args) -> int:
    path = Path(args.metrics)
    if path.is_dir():
        path = path / "metrics.jsonl"
    rows = load_metrics(path)
    if not rows:
        raise ConfigError(f"{path}: no metric rows")
    print(f"{path}: {len(rows)} rounds")
    acc = [r["test_accuracy"] for r in rows]
    print(f"  test accuracy: first={acc[0]:.4f} final={acc[-1]:.4f} best={max(acc):.4f}")
    cos = [r["mean_pairwise_cosine"] for r in rows]
    print(f"  mean pairwise cosine: min={min(cos):+.4f} final={cos[-1]:+.4f}")
    decomposed = [r for r in rows if r["global_loss"] is not None]
    if decomposed:
        last = decomposed[-1]
        print(
            f"  decomposition @ round {last['round']}: "
            f"local={last['local_loss']:.4f} "
            f"shift={last['dist_shift_loss']:.4f} "
            f"aggregation={last['aggregation_loss']:.4f} "
            f"global={last['global_loss']:.4f}"
        )
    return 0


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON run config; flags below override it")
    sub.add_argument("--seed", type=int, help="override every seed in the config")
    sub.add_argument("--output-dir", dest="output_dir", help="where to persist artifacts")
    sub.add_argument("--decompose-every", dest="decompose_every", type=int,
                     help="decomposition cadence in rounds (0 disables)")
    sub.add_argument("--mode", choices=["fedavg", "principal"], help="aggregation mode")
    sub.add_argument("--lambda", dest="margin_weight", type=float,
                     help="margin-control weight")
    sub.add_argument("--revision", choices=["normalized", "literal"],
                     help="gradient revision variant")
    sub.add_argument("--prox-mu", dest="prox_mu", type=float,
                     help="proximal pull toward the global model")
    sub.add_argument("--rounds", type=int, help="number of communication rounds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="feddecomp",
        description="Federated-learning simulator with loss-decomposition diagnostics.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("partition", help="materialize shards to disk as CSV")
    _add_common(p)
    p.set_defaults(func=_cmd_partition)

    p = subs.add_parser("run", help="execute one simulation")
    _add_common(p)
    p.set_defaults(func=_cmd_run)

    p = subs.add_parser("ablate", help="run the margin x principal 2x2 grid")
    _add_common(p)
    p.add_argument("--seeds", help="comma-separated seeds (default: config seed)")
    p.set_defaults(func=_cmd_ablate)

    p = subs.add_parser("inspect", help="summarize a metrics file or run dir")
    p.add_argument("metrics", help="path to metrics.jsonl or a run directory")
    p.set_defaults(func=_cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
