"""Small dense linear algebra for the server-side aggregation step.

Vectors and matrices are plain float64 numpy arrays (row-major). The
eigensolver is a cyclic Jacobi iteration, which is the right tool for the
small symmetric cross-gradient matrices built each round: for m clients the
matrix is m-by-m with m rarely above a few hundred. numpy is used for
storage and BLAS-level arithmetic only; the decomposition itself lives here
so tests can check it against an independent dense solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateAxisError, EmptyInputError, ShapeError

# Eigenvalues below RANK_TOL times the largest one have no usable direction
# and are flagged so callers can skip them.
RANK_TOL = 1e-10

_MAX_SWEEPS = 100
_OFFDIAG_TOL = 1e-12


@dataclass(frozen=True)
class EigenPair:
    """One eigenvalue with its unit-norm eigenvector.

    ``rank_deficient`` marks eigenvalues too small (relative to the largest)
    for their eigenvector direction to be trusted downstream.
    """

    value: float
    vector: np.ndarray
    rank_deficient: bool = False


def as_matrix(entries, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Coerce to a finite float64 2-D array, optionally checking its shape."""
    a = np.asarray(entries, dtype=float)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D array, got ndim={a.ndim}")
    if rows is not None and a.shape[0] != rows:
        raise ShapeError(f"expected {rows} rows, got {a.shape[0]}")
    if cols is not None and a.shape[1] != cols:
        raise ShapeError(f"expected {cols} cols, got {a.shape[1]}")
    if not np.all(np.isfinite(a)):
        raise ShapeError("matrix contains non-finite entries")
    return a


def gram(g: np.ndarray, side: str = "right") -> np.ndarray:
    """Cross-product matrix of a d-by-m column-stacked gradient matrix.

    side="right" returns GᵀG (m-by-m, the cheap side); side="left" returns
    GGᵀ (d-by-d). The result is explicitly symmetrised so downstream
    symmetry checks never trip on BLAS rounding.
    """
    g = as_matrix(g)
    if g.size == 0:
        raise EmptyInputError("gram of an empty matrix")
    if side == "right":
        out = g.T @ g
    elif side == "left":
        out = g @ g.T
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    return (out + out.T) / 2.0


def sym_eigen(a: np.ndarray, tol: float = 1e-9) -> list[EigenPair]:
    """Full eigendecomposition of a small symmetric matrix.

    Runs cyclic Jacobi sweeps in a fixed (p, q) order until the off-diagonal
    Frobenius norm falls below 1e-12 times the matrix norm, or 100 sweeps.
    Returns all pairs sorted by descending eigenvalue; eigenvectors are the
    accumulated rotation columns and therefore mutually orthonormal.

    ``tol`` bounds the allowed asymmetry of the input (relative to its
    largest entry); anything beyond that is a shape error, not noise.
    """
    a = as_matrix(a)
    n, m = a.shape
    if n != m:
        raise ShapeError(f"eigendecomposition needs a square matrix, got {n}x{m}")
    if n == 0:
        raise EmptyInputError("eigendecomposition of an empty matrix")
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    asym = float(np.max(np.abs(a - a.T)))
    if asym > tol * max(1.0, scale):
        raise ShapeError(f"matrix is not symmetric (max asymmetry {asym:.3e})")

    b = (a + a.T) / 2.0
    v = np.eye(n)
    norm = float(np.linalg.norm(b))
    if norm > 0.0:
        for _ in range(_MAX_SWEEPS):
            off = math.sqrt(2.0 * float(np.sum(np.tril(b, -1) ** 2)))
            if off <= _OFFDIAG_TOL * norm:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = b[p, q]
                    if apq == 0.0:
                        continue
                    # Stable rotation angle (Golub & Van Loan sec. 8.5).
                    tau = (b[q, q] - b[p, p]) / (2.0 * apq)
                    if tau >= 0.0:
                        t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                    else:
                        t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                    c = 1.0 / math.sqrt(1.0 + t * t)
                    s = t * c

                    bp, bq = b[:, p].copy(), b[:, q].copy()
                    b[:, p] = c * bp - s * bq
                    b[:, q] = s * bp + c * bq
                    bp, bq = b[p, :].copy(), b[q, :].copy()
                    b[p, :] = c * bp - s * bq
                    b[q, :] = s * bp + c * bq
                    b[p, q] = b[q, p] = 0.0

                    vp, vq = v[:, p].copy(), v[:, q].copy()
                    v[:, p] = c * vp - s * vq
                    v[:, q] = s * vp + c * vq

    values = np.diag(b).copy()
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = v[:, order]
    largest = float(values[0]) if values.size else 0.0
    pairs = []
    for k in range(n):
        val = float(values[k])
        deficient = val < RANK_TOL * largest if largest > 0.0 else True
        pairs.append(EigenPair(value=val, vector=vectors[:, k].copy(), rank_deficient=deficient))
    return pairs


def project(g: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Orthogonal projection of g onto the line spanned by ``axis``.

    Computes (⟨g, axis⟩ / ‖axis‖²) · axis, so the result is invariant to the
    axis normalisation. A zero axis has no direction to project onto.
    """
    g = np.asarray(g, dtype=float)
    axis = np.asarray(axis, dtype=float)
    if g.shape != axis.shape:
        raise ShapeError(f"vector shapes differ: {g.shape} vs {axis.shape}")
    denom = float(axis @ axis)
    if denom == 0.0:
        raise DegenerateAxisError("cannot project onto a zero axis")
    return (float(g @ axis) / denom) * axis
