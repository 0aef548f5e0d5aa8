"""Server-side gradient combination: weighted averaging and the principal
direction pipeline (construct -> calibrate -> revise -> aggregate).

Client updates form the columns of G (d-by-m). Instead of eigendecomposing
the huge d-by-d cross-product GGᵀ directly, the m-by-m Gram matrix GᵀG is
decomposed and each small-side eigenvector e_z is mapped through the
bijection v_z = G e_z, which carries the nonzero spectrum across exactly.
The resulting principal directions are sign-calibrated against the mean
update, each client's update is re-expressed on the retained axes with
eigenvalue-proportional weights, rescaled back to its original length, and
finally combined by sample-count weights.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateRoundError, EmptyInputError, ShapeError
from .linalg import RANK_TOL, gram, project, sym_eigen
from .training import FlatGradient

log = logging.getLogger(__name__)

# Projections smaller than this fraction of ||g|| contribute nothing but
# rounding noise and are skipped.
_PROJ_TOL = 1e-12


class OrthogonalClientWarning(UserWarning):
    """A client's gradient had no component along any retained axis."""


@dataclass(frozen=True)
class AggregationMode:
    kind: str = "fedavg"  # "fedavg" | "principal"
    revision: str = "normalized"  # "normalized" | "literal"
    top_fraction: float = 0.8

    def __post_init__(self):
        if self.kind not in ("fedavg", "principal"):
            raise ConfigError(f"unknown aggregation kind {self.kind!r}")
        if self.revision not in ("normalized", "literal"):
            raise ConfigError(f"unknown revision mode {self.revision!r}")
        if not 0.0 < self.top_fraction <= 1.0:
            raise ConfigError("top_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class PrincipalBasis:
    """Calibrated principal directions of one round's gradient matrix.

    ``axes`` is (L, d) with orthonormal rows, each sign-flipped so its inner
    product with the mean update ``reference`` is nonnegative.
    ``eigenvalues`` are the matching eigenvalues of (1/m) G Gᵀ, descending.
    ``spectrum`` keeps all m of them (including dropped ones) for
    instrumentation.
    """

    axes: np.ndarray
    eigenvalues: np.ndarray
    reference: np.ndarray
    spectrum: np.ndarray = field(repr=False, default=None)

    @property
    def num_axes(self) -> int:
        return len(self.eigenvalues)


def calibrate(v: np.ndarray, g_hat: np.ndarray) -> np.ndarray:
    """Orient an eigenvector toward the mean update.

    Eigenvectors come with arbitrary sign; flip v when ⟨v, ĝ⟩ < 0 so every
    retained axis points in a loss-reducing direction. An exactly orthogonal
    vector keeps its sign (the >= 0 branch).
    """
    v = np.asarray(v, dtype=float)
    if float(np.linalg.norm(v)) == 0.0:
        raise ShapeError("cannot calibrate a zero vector")
    return v if float(v @ np.asarray(g_hat, dtype=float)) >= 0.0 else -v


def build_basis(
    grads: list[FlatGradient],
    top_fraction: float = 0.8,
    tol: float = RANK_TOL,
) -> PrincipalBasis:
    """Construct the calibrated principal basis from this round's gradients.

    Eigendecomposes GᵀG (m-by-m), maps each above-tolerance eigenvector
    through v_z = G e_z, normalises to unit length, calibrates signs against
    the mean update, and retains the top L = max(1, floor(top_fraction *
    m_effective)) axes, where m_effective counts eigenvalues above
    tol * lambda_max. Reported eigenvalues are those of (1/m) G Gᵀ.
    """
    if not grads:
        raise EmptyInputError("no gradients to build a basis from")
    dims = {g.delta.shape[0] for g in grads}
    if len(dims) != 1:
        raise ShapeError(f"gradient dimensions differ: {sorted(dims)}")
    m = len(grads)
    g_matrix = np.column_stack([g.delta for g in grads])
    if not np.any(g_matrix):
        raise DegenerateRoundError("all client gradients are zero")

    pairs = sym_eigen(gram(g_matrix, side="right"))
    values = np.array([p.value for p in pairs])
    spectrum = np.maximum(values, 0.0) / m

    usable = [p for p in pairs if not p.rank_deficient]
    m_effective = len(usable)
    n_keep = max(1, int(np.floor(top_fraction * m_effective)))
    g_hat = g_matrix.mean(axis=1)

    axes = np.empty((n_keep, g_matrix.shape[0]))
    for z in range(n_keep):
        v = g_matrix @ usable[z].vector
        v /= np.linalg.norm(v)
        axes[z] = calibrate(v, g_hat)

    return PrincipalBasis(
        axes=axes,
        eigenvalues=spectrum[:n_keep].copy(),
        reference=g_hat,
        spectrum=spectrum,
    )


def gradient_spectrum(grads: list[FlatGradient]) -> np.ndarray:
    """Eigenvalues of (1/m) G Gᵀ, descending, clipped at zero.

    Computed through the same small-side decomposition as build_basis so
    instrumented spectra match basis eigenvalues bit for bit. An all-zero
    round has an all-zero spectrum.
    """
    if not grads:
        raise EmptyInputError("no gradients")
    m = len(grads)
    g_matrix = np.column_stack([g.delta for g in grads])
    if not np.any(g_matrix):
        return np.zeros(m)
    pairs = sym_eigen(gram(g_matrix, side="right"))
    return np.maximum(np.array([p.value for p in pairs]), 0.0) / m


def revise_gradient(
    grad: FlatGradient, basis: PrincipalBasis, revision: str = "normalized"
) -> FlatGradient:
    """Re-express one client's gradient on the retained principal axes.

    normalized: eigenvalue-proportional weights on the per-axis projections,
    then one final rescale to the original gradient norm, so the magnitude
    is preserved exactly. literal: per-axis length correction applied term
    by term, i.e. each surviving projection is stretched to the original
    norm before summing (the sum itself is not rescaled).

    Axes whose projection is below 1e-12 of ||g|| are skipped in both modes.
    A gradient orthogonal to every retained axis is returned unchanged with
    an OrthogonalClientWarning.
    """
    if revision not in ("normalized", "literal"):
        raise ConfigError(f"unknown revision mode {revision!r}")
    g = grad.delta
    if g.shape != basis.axes.shape[1:]:
        raise ShapeError("gradient dim does not match basis dim")
    g_norm = float(np.linalg.norm(g))
    if g_norm == 0.0:
        return grad

    combined = np.zeros_like(g)
    weight_sum = float(basis.eigenvalues.sum())
    for z in range(basis.num_axes):
        proj = project(g, basis.axes[z])
        proj_norm = float(np.linalg.norm(proj))
        if proj_norm < _PROJ_TOL * g_norm:
            continue
        if revision == "normalized":
            combined += (basis.eigenvalues[z] / weight_sum) * proj
        else:
            combined += (g_norm / proj_norm) * proj

    combined_norm = float(np.linalg.norm(combined))
    if combined_norm < _PROJ_TOL * g_norm:
        warnings.warn(
            f"client {grad.client_id}: gradient orthogonal to all retained axes; "
            "passing it through unrevised",
            OrthogonalClientWarning,
            stacklevel=2,
        )
        return grad

    if revision == "normalized":
        combined *= g_norm / combined_norm
    return FlatGradient(delta=combined, client_id=grad.client_id, n_samples=grad.n_samples)


def aggregate(grads: list[FlatGradient], weights: np.ndarray) -> FlatGradient:
    """Weighted sum of client gradients; weights must already sum to one."""
    if not grads:
        raise EmptyInputError("nothing to aggregate")
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(grads),):
        raise ConfigError(f"need {len(grads)} weights, got shape {weights.shape}")
    if abs(float(weights.sum()) - 1.0) > 1e-12:
        raise ConfigError(f"aggregation weights sum to {weights.sum()!r}, expected 1")
    dims = {g.delta.shape[0] for g in grads}
    if len(dims) != 1:
        raise ShapeError(f"gradient dimensions differ: {sorted(dims)}")
    total = sum(w * g.delta for w, g in zip(weights, grads))
    n_total = sum(g.n_samples for g in grads)
    return FlatGradient(delta=total, client_id=-1, n_samples=n_total)


def sample_weights(grads: list[FlatGradient]) -> np.ndarray:
    """Per-client weights n_i / n over the round's participants."""
    counts = np.array([g.n_samples for g in grads], dtype=float)
    return counts / counts.sum()


def principal_aggregate(
    grads: list[FlatGradient],
    mode: AggregationMode,
    tol: float = RANK_TOL,
) -> tuple[FlatGradient, PrincipalBasis | None]:
    """Full pipeline for one round under the given mode.

    fedavg averages the raw gradients. principal builds the basis, revises
    every gradient, and averages the revisions; it falls back to plain
    averaging when the round is degenerate (all-zero gradients) or has a
    single participant, for which revision is the identity map anyway.
    Returns the basis actually used (None on the fedavg path).
    """
    weights = sample_weights(grads)
    if mode.kind == "fedavg" or len(grads) == 1:
        return aggregate(grads, weights), None
    try:
        basis = build_basis(grads, top_fraction=mode.top_fraction, tol=tol)
    except DegenerateRoundError:
        log.warning("degenerate round (all-zero gradients); falling back to fedavg")
        return aggregate(grads, weights), None
    revised = [revise_gradient(g, basis, mode.revision) for g in grads]
    return aggregate(revised, weights), basis
