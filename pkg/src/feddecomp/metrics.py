"""Round instrumentation: the three-term global-loss decomposition,
gradient-conflict statistics, and eigenvalue spectra.

For weights a_i = n_i/n, local models w_i, and a global model w, the global
objective L(w) = sum_i a_i L_i(w) splits exactly into

    sum_i a_i L_i(w_i)                                   local loss
  + sum_j sum_i a_j a_i (L_j(w_i) - L_i(w_i))            distribution shift
  + sum_i a_i (L(w) - L(w_i))                            aggregation

because sum_j a_j L_j(.) = L(.). The identity is algebraic, so it is
enforced here at near machine precision; a violation means an evaluation
bug, not rounding. Reported "shift" and "aggregation" losses are the
absolute values of the signed middle and last terms; both are persisted.

Losses here are cross-entropy only. Folding the margin penalty in would
make the decomposition depend on each run's margin weight and break
comparability across configurations.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .datasets import ClientDataset
from .errors import InternalConsistencyError, ShapeError
from .models import ModelParams, evaluate
from .training import FlatGradient

IDENTITY_RTOL = 1e-9


@dataclass(frozen=True)
class DecompositionTerms:
    local_loss: float
    dist_shift_signed: float
    dist_shift_loss: float
    aggregation_signed: float
    aggregation_loss: float
    global_loss: float


@dataclass(frozen=True)
class ConflictStats:
    mean_pairwise_cosine: float
    min_pairwise_cosine: float
    degenerate: bool = False


@dataclass(frozen=True)
class RoundMetrics:
    """Everything recorded about one communication round.

    Decomposition fields are None on rounds where the O(m^2) cross
    evaluation was skipped. ``wall_time`` is measured per round but kept out
    of the deterministic metrics files (see MetricsWriter).
    """

    round: int
    test_accuracy: float
    test_ce: float
    mean_pairwise_cosine: float
    min_pairwise_cosine: float
    spectrum: list[float]
    local_loss: float | None = None
    dist_shift_loss: float | None = None
    aggregation_loss: float | None = None
    dist_shift_signed: float | None = None
    aggregation_signed: float | None = None
    global_loss: float | None = None
    wall_time: float = 0.0


def cross_eval_matrix(
    local_models: list[ModelParams], shards: list[ClientDataset]
) -> np.ndarray:
    """Entry (j, i) is the CE loss of client i's model on client j's shard."""
    if len(local_models) != len(shards):
        raise ShapeError(
            f"{len(local_models)} models but {len(shards)} shards"
        )
    m = len(shards)
    cross = np.empty((m, m))
    for j, shard in enumerate(shards):
        for i, model in enumerate(local_models):
            cross[j, i] = evaluate(model, shard.features, shard.labels).ce
    return cross


def decompose_from_losses(
    cross: np.ndarray, weights: np.ndarray, per_shard_global: np.ndarray
) -> DecompositionTerms:
    """Pure arithmetic of the decomposition given already-evaluated losses.

    ``per_shard_global[j]`` is the global model's loss on shard j, so the
    global objective is weights @ per_shard_global. The exactness check is
    the module's reason to exist: it fails loudly rather than tolerating
    drift.
    """
    cross = np.asarray(cross, dtype=float)
    weights = np.asarray(weights, dtype=float)
    per_shard_global = np.asarray(per_shard_global, dtype=float)
    m = len(weights)
    if cross.shape != (m, m):
        raise ShapeError(f"cross matrix shape {cross.shape}, expected {(m, m)}")
    if per_shard_global.shape != (m,):
        raise ShapeError(
            f"per-shard global losses shape {per_shard_global.shape}, expected {(m,)}"
        )

    global_loss = float(weights @ per_shard_global)
    diag = np.diag(cross)
    local_loss = float(weights @ diag)
    # sum_j sum_i a_j a_i (cross[j,i] - cross[i,i])
    shift_signed = float(weights @ cross @ weights - diag @ weights)
    # L(w_i) = sum_j a_j cross[j,i]
    loss_at_locals = weights @ cross
    agg_signed = float(global_loss - weights @ loss_at_locals)

    resid = abs(local_loss + shift_signed + agg_signed - global_loss)
    if not resid <= IDENTITY_RTOL * max(1.0, abs(global_loss)):  # NaN fails too
        raise InternalConsistencyError(
            f"loss decomposition identity violated by {resid:.3e}"
        )
    return DecompositionTerms(
        local_loss=local_loss,
        dist_shift_signed=shift_signed,
        dist_shift_loss=abs(shift_signed),
        aggregation_signed=agg_signed,
        aggregation_loss=abs(agg_signed),
        global_loss=global_loss,
    )


def decompose(
    cross: np.ndarray,
    global_params: ModelParams,
    weights: np.ndarray,
    shards: list[ClientDataset],
) -> DecompositionTerms:
    """Split the global loss at ``global_params`` into its three terms.

    ``cross`` is the matrix from cross_eval_matrix over the same shards and
    the same client order as ``weights``.
    """
    if len(shards) != len(weights):
        raise ShapeError(f"{len(shards)} shards but {len(weights)} weights")
    per_shard_global = np.array(
        [evaluate(global_params, s.features, s.labels).ce for s in shards]
    )
    return decompose_from_losses(cross, weights, per_shard_global)


def conflict_stats(grads: list[FlatGradient]) -> ConflictStats:
    """Mean and min cosine similarity over all unordered gradient pairs.

    With fewer than two positive-norm gradients there is no pair to
    measure; the neutral value 1.0 is returned with ``degenerate`` set.
    """
    vecs = [g.delta for g in grads if g.norm > 0.0]
    if len(vecs) < 2:
        return ConflictStats(1.0, 1.0, degenerate=True)
    units = [v / np.linalg.norm(v) for v in vecs]
    cosines = [
        float(units[i] @ units[j])
        for i in range(len(units))
        for j in range(i + 1, len(units))
    ]
    return ConflictStats(
        mean_pairwise_cosine=float(np.mean(cosines)),
        min_pairwise_cosine=float(min(cosines)),
    )


# Column order of the persisted files; wall_time deliberately absent so two
# runs of the same seed produce byte-identical artifacts.
_COLUMNS = [
    "round",
    "test_accuracy",
    "test_ce",
    "mean_pairwise_cosine",
    "min_pairwise_cosine",
    "spectrum",
    "local_loss",
    "dist_shift_loss",
    "aggregation_loss",
    "dist_shift_signed",
    "aggregation_signed",
    "global_loss",
]


class MetricsWriter:
    """Streams RoundMetrics to metrics.jsonl + metrics.csv (identical
    columns) and wall-clock timings to a separate timings.csv sidecar."""

    def __init__(self, out_dir: str | Path):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.jsonl_path = out_dir / "metrics.jsonl"
        self.csv_path = out_dir / "metrics.csv"
        self.timings_path = out_dir / "timings.csv"
        self._jsonl = open(self.jsonl_path, "w", encoding="utf-8")
        self._csv_file = open(self.csv_path, "w", encoding="utf-8", newline="")
        self._csv = csv.writer(self._csv_file)
        self._csv.writerow(_COLUMNS)
        self._timings = open(self.timings_path, "w", encoding="utf-8", newline="")
        self._timings_csv = csv.writer(self._timings)
        self._timings_csv.writerow(["round", "wall_time"])

    @staticmethod
    def _cell(value) -> str:
        if value is None:
            return ""
        if isinstance(value, list):
            return json.dumps(value)
        if isinstance(value, float):
            return repr(value)
        return str(value)

    def append(self, metrics: RoundMetrics) -> None:
        record = asdict(metrics)
        record.pop("wall_time")
        row = {k: record[k] for k in _COLUMNS}
        self._jsonl.write(json.dumps(row) + "\n")
        self._csv.writerow([self._cell(row[k]) for k in _COLUMNS])
        self._timings_csv.writerow([metrics.round, f"{metrics.wall_time:.6f}"])
        self._jsonl.flush()
        self._csv_file.flush()
        self._timings.flush()

    def close(self) -> None:
        self._jsonl.close()
        self._csv_file.close()
        self._timings.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def load_metrics(jsonl_path: str | Path) -> list[dict]:
    """Read back a metrics.jsonl file as a list of per-round dicts."""
    rows = []
    with open(jsonl_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows
