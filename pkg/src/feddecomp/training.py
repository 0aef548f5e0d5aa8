"""One client's local work for a round: seeded mini-batch SGD on its shard.

The quantity a client uploads is the accumulated parameter delta

    g_i = w_global - w_local_final

a pseudo-gradient: after multiple local SGD steps this delta is the only
vector consistent with the server treating the upload as a gradient and
stepping w <- w - server_lr * g. With server_lr = 1 and plain weighted
averaging, the update reduces exactly to classical model averaging.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import ClientDataset
from .errors import ConfigError, DivergenceError, ShapeError
from .models import LossReport, ModelParams, evaluate, loss_and_grad


@dataclass(frozen=True)
class LocalConfig:
    learning_rate: float = 0.01
    batch_size: int = 50
    local_epochs: int = 1
    margin_weight: float = 0.0
    prox_mu: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.local_epochs < 1:
            raise ConfigError("local_epochs must be >= 1")
        if self.margin_weight < 0:
            raise ConfigError("margin_weight must be >= 0")
        if self.prox_mu < 0:
            raise ConfigError("prox_mu must be >= 0")


@dataclass(frozen=True)
class FlatGradient:
    """A client's flattened update vector plus its sample weight."""

    delta: np.ndarray
    client_id: int
    n_samples: int

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=float)
        if delta.ndim != 1:
            raise ShapeError("gradient must be a flat vector")
        object.__setattr__(self, "delta", delta)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.delta))


def train_local(
    global_params: ModelParams,
    shard: ClientDataset,
    cfg: LocalConfig,
    round_index: int = 0,
) -> tuple[FlatGradient, LossReport]:
    """Run the local epochs and return (pseudo-gradient, final loss report).

    Batches are drawn from a fresh per-epoch permutation seeded by
    (cfg.seed, round_index, client_id, epoch), so results are bit-identical
    across runs and independent of how many clients train concurrently.
    The optional proximal term prox_mu/2 * ||w - w_global||^2 pulls the
    local trajectory back toward the downloaded parameters.

    The returned report evaluates the trained parameters on the full shard.
    Global parameters are never mutated.
    """
    if shard.input_dim != global_params.arch.input_dim:
        raise ShapeError(
            f"shard feature dim {shard.input_dim} does not match "
            f"model input_dim {global_params.arch.input_dim}"
        )
    w0 = global_params.flat
    w = w0.copy()
    n = shard.n_samples

    for epoch in range(cfg.local_epochs):
        rng = np.random.default_rng(
            np.random.SeedSequence([cfg.seed, round_index, shard.client_id, epoch])
        )
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            params = ModelParams(arch=global_params.arch, flat=w)
            report, grad = loss_and_grad(
                params, shard.features[batch], shard.labels[batch], cfg.margin_weight
            )
            if not np.isfinite(report.total):
                raise DivergenceError(shard.client_id)
            if cfg.prox_mu > 0.0:
                grad = grad + cfg.prox_mu * (w - w0)
            w = w - cfg.learning_rate * grad

    final = ModelParams(arch=global_params.arch, flat=w)
    final_report = evaluate(final, shard.features, shard.labels, cfg.margin_weight)
    if not np.isfinite(final_report.total):
        raise DivergenceError(shard.client_id)
    grad_out = FlatGradient(delta=w0 - w, client_id=shard.client_id, n_samples=n)
    return grad_out, final_report


def apply_global_update(
    global_params: ModelParams, g_bar: FlatGradient, server_lr: float = 1.0
) -> ModelParams:
    """Server step: w <- w - server_lr * g_bar."""
    if g_bar.delta.shape != global_params.flat.shape:
        raise ShapeError(
            f"global gradient dim {g_bar.delta.shape} does not match "
            f"param dim {global_params.flat.shape}"
        )
    return ModelParams(
        arch=global_params.arch, flat=global_params.flat - server_lr * g_bar.delta
    )


def local_model_from_gradient(
    global_params: ModelParams, grad: FlatGradient
) -> ModelParams:
    """Reconstruct the client's final local parameters: w_i = w_global - g_i."""
    if grad.delta.shape != global_params.flat.shape:
        raise ShapeError("gradient dim does not match param dim")
    return ModelParams(arch=global_params.arch, flat=global_params.flat - grad.delta)
