"""Round loop for a simulated federation.

Clients are in-process tasks over immutable shards; uploading/downloading
is message passing of flat arrays. Each round: sample participants, train
them locally (optionally on a thread pool), combine their pseudo-gradients
under the configured aggregation mode, step the global model, evaluate on
the held-out split, and persist metrics. Everything is derived from the
run seed, so two executions of the same config produce byte-identical
metrics files and checkpoints regardless of worker count.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .aggregation import AggregationMode, gradient_spectrum, principal_aggregate, sample_weights
from .datasets import (
    ClientDataset,
    FederationSpec,
    append_noise_columns,
    generate_base,
    inject_shortcut,
    partition_dirichlet,
    stratified_split,
)
from .errors import ConfigError
from .metrics import (
    MetricsWriter,
    RoundMetrics,
    conflict_stats,
    cross_eval_matrix,
    decompose,
)
from .models import Architecture, ModelParams, evaluate, init_params
from .training import (
    LocalConfig,
    apply_global_update,
    local_model_from_gradient,
    train_local,
)

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "float64-le-flat"


@dataclass(frozen=True)
class DataConfig:
    """Synthetic base-task shape (pre shortcut columns)."""

    classes: int = 4
    samples: int = 4000
    input_dim: int = 10


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "softmax"
    hidden: int = 32


@dataclass(frozen=True)
class RunConfig:
    federation: FederationSpec
    local: LocalConfig
    mode: AggregationMode = AggregationMode()
    data: DataConfig = DataConfig()
    model: ModelConfig = ModelConfig()
    rounds: int = 50
    sampling_rate: float = 1.0
    server_lr: float = 1.0
    decompose_every: int = 5
    seed: int = 0
    output_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if not 0.0 < self.sampling_rate <= 1.0:
            raise ConfigError("sampling_rate must lie in (0, 1]")
        if self.decompose_every < 0:
            raise ConfigError("decompose_every must be >= 0 (0 disables)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def with_seed(self, seed: int) -> "RunConfig":
        """Copy with the master seed and both nested seeds set together."""
        return replace(
            self,
            seed=seed,
            federation=replace(self.federation, seed=seed),
            local=replace(self.local, seed=seed),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["output_dir"] = None if self.output_dir is None else str(self.output_dir)
        return d

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        try:
            return RunConfig(
                federation=FederationSpec(**d["federation"]),
                local=LocalConfig(**d["local"]),
                mode=AggregationMode(**d.get("mode", {})),
                data=DataConfig(**d.get("data", {})),
                model=ModelConfig(**d.get("model", {})),
                **{
                    k: d[k]
                    for k in (
                        "rounds",
                        "sampling_rate",
                        "server_lr",
                        "decompose_every",
                        "seed",
                        "output_dir",
                        "workers",
                    )
                    if k in d
                },
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad run config: {exc}") from exc

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class RunSummary:
    final_accuracy: float
    best_accuracy: float
    rounds_completed: int
    metrics_path: str | None
    persisted_partial: bool = False
    history: list[RoundMetrics] = field(repr=False, default_factory=list)


def sample_clients(m: int, rate: float, round_index: int, seed: int) -> list[int]:
    """Deterministic participant subset of size max(1, round(rate * m)).

    The subset depends only on (seed, round_index); rate 1 returns every
    client in id order.
    """
    if not 0.0 < rate <= 1.0:
        raise ConfigError("sampling rate must lie in (0, 1]")
    size = max(1, int(round(rate * m)))
    if size >= m:
        return list(range(m))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 5, round_index]))
    picked = rng.choice(m, size=size, replace=False)
    return sorted(int(c) for c in picked)


def build_federation(
    cfg: RunConfig,
) -> tuple[list[ClientDataset], np.ndarray, np.ndarray, Architecture]:
    """Materialize shards, the held-out split, and the model architecture.

    The held-out split is stratified and global (never partitioned). When
    shortcut injection is configured the test features get the same number
    of extra columns, all pure noise: shortcut cues must not generalize.
    """
    fed = cfg.federation
    features, labels = generate_base(
        cfg.data.classes, cfg.data.samples, cfg.data.input_dim, fed.seed
    )
    train_x, train_y, test_x, test_y = stratified_split(
        features, labels, fed.test_fraction, fed.seed
    )
    shards = partition_dirichlet(
        train_x, train_y, fed.num_clients, fed.dirichlet_alpha, fed.seed
    )
    input_dim = cfg.data.input_dim
    if fed.shortcut_strength > 0.0:
        shards = inject_shortcut(shards, fed.shortcut_strength, fed.seed)
        test_x = append_noise_columns(test_x, fed.num_clients, fed.seed)
        input_dim += fed.num_clients

    arch = Architecture(
        kind=cfg.model.kind,
        input_dim=input_dim,
        num_classes=cfg.data.classes,
        hidden=cfg.model.hidden if cfg.model.kind == "mlp" else None,
    )
    return shards, test_x, test_y, arch


def _train_round(
    params: ModelParams,
    shards: list[ClientDataset],
    ids: list[int],
    local_cfg: LocalConfig,
    round_index: int,
    workers: int,
):
    """Fan out local training, collect results in client-id order."""
    if workers == 1 or len(ids) == 1:
        results = [train_local(params, shards[cid], local_cfg, round_index) for cid in ids]
    else:
        with ThreadPoolExecutor(max_workers=min(workers, len(ids))) as pool:
            futures = {
                cid: pool.submit(train_local, params, shards[cid], local_cfg, round_index)
                for cid in ids
            }
            results = [futures[cid].result() for cid in ids]
    grads = [r[0] for r in results]
    reports = [r[1] for r in results]
    return grads, reports


def run_federation(
    shards: list[ClientDataset],
    test_x: np.ndarray,
    test_y: np.ndarray,
    arch: Architecture,
    cfg: RunConfig,
) -> RunSummary:
    """Execute the round loop on already-materialized data."""
    params = init_params(arch, cfg.seed)
    writer = MetricsWriter(cfg.output_dir) if cfg.output_dir is not None else None
    summary = RunSummary(
        final_accuracy=0.0,
        best_accuracy=0.0,
        rounds_completed=0,
        metrics_path=None if writer is None else str(writer.jsonl_path),
    )
    m = len(shards)

    try:
        for r in range(cfg.rounds):
            t0 = time.perf_counter()
            ids = sample_clients(m, cfg.sampling_rate, r, cfg.seed)
            grads, _ = _train_round(params, shards, ids, cfg.local, r, cfg.workers)

            conflict = conflict_stats(grads)
            g_bar, basis = principal_aggregate(grads, cfg.mode)
            spectrum = basis.spectrum if basis is not None else gradient_spectrum(grads)

            prev_params = params
            params = apply_global_update(params, g_bar, cfg.server_lr)
            test_report = evaluate(params, test_x, test_y)

            terms = None
            if cfg.decompose_every > 0 and (r + 1) % cfg.decompose_every == 0:
                local_models = [local_model_from_gradient(prev_params, g) for g in grads]
                part_shards = [shards[cid] for cid in ids]
                cross = cross_eval_matrix(local_models, part_shards)
                terms = decompose(cross, params, sample_weights(grads), part_shards)

            metrics = RoundMetrics(
                round=r,
                test_accuracy=test_report.accuracy,
                test_ce=test_report.ce,
                mean_pairwise_cosine=conflict.mean_pairwise_cosine,
                min_pairwise_cosine=conflict.min_pairwise_cosine,
                spectrum=[float(v) for v in spectrum],
                local_loss=None if terms is None else terms.local_loss,
                dist_shift_loss=None if terms is None else terms.dist_shift_loss,
                aggregation_loss=None if terms is None else terms.aggregation_loss,
                dist_shift_signed=None if terms is None else terms.dist_shift_signed,
                aggregation_signed=None if terms is None else terms.aggregation_signed,
                global_loss=None if terms is None else terms.global_loss,
                wall_time=time.perf_counter() - t0,
            )
            summary.history.append(metrics)
            if writer is not None:
                try:
                    writer.append(metrics)
                except OSError as exc:
                    log.error("metrics persistence failed: %s", exc)
                    summary.persisted_partial = True
                    writer.close()
                    writer = None

            summary.rounds_completed = r + 1
            summary.final_accuracy = test_report.accuracy
            summary.best_accuracy = max(summary.best_accuracy, test_report.accuracy)
    finally:
        if writer is not None:
            writer.close()

    if cfg.output_dir is not None and not summary.persisted_partial:
        try:
            save_checkpoint(Path(cfg.output_dir) / "checkpoint", params, cfg.config_hash())
        except OSError as exc:
            log.error("checkpoint persistence failed: %s", exc)
            summary.persisted_partial = True
    return summary


def run(cfg: RunConfig) -> RunSummary:
    """Build the federation from config and execute the round loop."""
    shards, test_x, test_y, arch = build_federation(cfg)
    return run_federation(shards, test_x, test_y, arch, cfg)


def run_ablation(cfg: RunConfig, seeds: list[int] | None = None) -> dict[str, list[RunSummary]]:
    """Run the 2x2 grid (margin on/off x principal on/off) over seeds.

    cfg.local.margin_weight supplies the "margin on" weight and must be
    positive. Returns per-cell summaries keyed by cell name.
    """
    if cfg.local.margin_weight <= 0.0:
        raise ConfigError("ablation needs local.margin_weight > 0 for the margin-on cells")
    seeds = [cfg.seed] if seeds is None else seeds
    cells = {
        "fedavg": (0.0, "fedavg"),
        "principal_only": (0.0, "principal"),
        "margin_only": (cfg.local.margin_weight, "fedavg"),
        "full": (cfg.local.margin_weight, "principal"),
    }
    results: dict[str, list[RunSummary]] = {}
    for name, (margin, kind) in cells.items():
        summaries = []
        for seed in seeds:
            cell_cfg = replace(
                cfg,
                local=replace(cfg.local, margin_weight=margin),
                mode=replace(cfg.mode, kind=kind),
                output_dir=(
                    None
                    if cfg.output_dir is None
                    else str(Path(cfg.output_dir) / name / f"seed{seed}")
                ),
            ).with_seed(seed)
            summaries.append(run(cell_cfg))
        results[name] = summaries
    return results


def save_checkpoint(prefix: str | Path, params: ModelParams, config_hash: str) -> None:
    """Write <prefix>.bin (raw little-endian float64) + <prefix>.json sidecar."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    params.flat.astype("<f8").tofile(prefix.with_suffix(".bin"))
    sidecar = {
        "format": CHECKPOINT_FORMAT,
        "param_count": int(params.flat.shape[0]),
        "architecture": params.arch.to_dict(),
        "config_hash": config_hash,
    }
    with open(prefix.with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(prefix: str | Path) -> tuple[ModelParams, dict]:
    prefix = Path(prefix)
    with open(prefix.with_suffix(".json"), "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    if sidecar.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"unknown checkpoint format {sidecar.get('format')!r}")
    flat = np.fromfile(prefix.with_suffix(".bin"), dtype="<f8")
    if flat.shape[0] != sidecar["param_count"]:
        raise ConfigError(
            f"checkpoint has {flat.shape[0]} params, sidecar says {sidecar['param_count']}"
        )
    arch = Architecture.from_dict(sidecar["architecture"])
    return ModelParams(arch=arch, flat=flat), sidecar
