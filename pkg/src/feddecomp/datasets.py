"""Synthetic federated datasets: generation, partitioning, shortcut injection.

The base task is a Gaussian-mixture classification problem with one mixture
centre per class, separated well enough that a centrally trained softmax
regression solves it. Heterogeneity across clients comes from a
per-class Dirichlet split; feature-distribution shift comes from injected
shortcut columns that predict labels on exactly one client and are pure
noise everywhere else.

Everything is seed-deterministic, and returned arrays are marked read-only
so shards can be shared freely across concurrent client trainers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, CsvFormatError, EmptyInputError

# Mixture component scale; class centres are kept >= 4 of these apart.
_SIGMA = 1.0
# Jitter scale of the active shortcut signal; small enough that the column
# stays strongly label-correlated on its home client.
_SIGNAL_NOISE_SCALE = 0.25


@dataclass(frozen=True)
class ClientDataset:
    """One client's immutable shard: features, integer labels, identity."""

    features: np.ndarray
    labels: np.ndarray
    client_id: int

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=float)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if features.ndim != 2 or labels.ndim != 1 or len(features) != len(labels):
            raise ConfigError("features must be (n, d) with matching (n,) labels")
        if len(labels) == 0:
            raise EmptyInputError(f"client {self.client_id} has an empty shard")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return len(self.labels)

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class FederationSpec:
    """How to carve one base dataset into a federation."""

    num_clients: int
    dirichlet_alpha: float
    shortcut_strength: float = 0.0
    seed: int = 0
    test_fraction: float = 0.1

    def __post_init__(self):
        if self.num_clients < 1:
            raise ConfigError("num_clients must be >= 1")
        if self.dirichlet_alpha <= 0:
            raise ConfigError("dirichlet_alpha must be > 0")
        if not 0.0 <= self.shortcut_strength <= 1.0:
            raise ConfigError("shortcut_strength must lie in [0, 1]")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie in (0, 1)")


def generate_base(
    classes: int, samples: int, input_dim: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian-mixture classification data, one centre per class.

    Centres are drawn at a scale that is grown until all pairwise distances
    reach 4 sigma, so the classes are linearly separable up to tail overlap.
    Sample counts are split as evenly as possible across classes and rows
    are shuffled. Deterministic under ``seed``.
    """
    if classes < 2:
        raise ConfigError("need at least 2 classes")
    if samples < classes:
        raise EmptyInputError(f"{samples} samples cannot cover {classes} classes")
    rng = np.random.default_rng(np.random.SeedSequence([seed, classes, input_dim]))

    scale = 4.0 * _SIGMA
    for _ in range(64):
        centers = rng.normal(0.0, scale, size=(classes, input_dim))
        diffs = centers[:, None, :] - centers[None, :, :]
        dists = np.sqrt((diffs**2).sum(axis=2))
        np.fill_diagonal(dists, np.inf)
        if dists.min() >= 4.0 * _SIGMA:
            break
        scale *= 1.5
    else:
        raise ConfigError("could not separate class centres; lower the class count")

    counts = np.full(classes, samples // classes)
    counts[: samples % classes] += 1
    labels = np.repeat(np.arange(classes), counts)
    features = centers[labels] + rng.normal(0.0, _SIGMA, size=(samples, input_dim))
    perm = rng.permutation(samples)
    return features[perm], labels[perm]


def stratified_split(
    features: np.ndarray, labels: np.ndarray, test_fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-class shuffled split into (train_x, train_y, test_x, test_y)."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError("test_fraction must lie in (0, 1)")
    labels = np.asarray(labels)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    test_idx = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        n_test = max(1, int(round(test_fraction * len(idx))))
        test_idx.append(idx[:n_test])
    test_idx = np.sort(np.concatenate(test_idx))
    mask = np.zeros(len(labels), dtype=bool)
    mask[test_idx] = True
    return features[~mask], labels[~mask], features[mask], labels[mask]


def partition_dirichlet(
    features: np.ndarray,
    labels: np.ndarray,
    num_clients: int,
    alpha: float,
    seed: int,
) -> list[ClientDataset]:
    """Label-shift partition: per-class client proportions ~ Dirichlet(alpha).

    Shards are disjoint and their union is the input set. Clients that end
    up empty are repaired by moving one sample at a time from the currently
    largest shard, since every aggregation weight n_i/n must be positive.
    """
    if num_clients < 1:
        raise ConfigError("num_clients must be >= 1")
    labels = np.asarray(labels)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))

    assignments: list[list[int]] = [[] for _ in range(num_clients)]
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        props = rng.dirichlet(np.full(num_clients, alpha))
        cuts = np.floor(np.cumsum(props) * len(idx)).astype(int)
        cuts[-1] = len(idx)
        start = 0
        for i, stop in enumerate(cuts):
            assignments[i].extend(idx[start:stop].tolist())
            start = stop

    # Empty-shard repair: steal single samples from the largest shard.
    sizes = np.array([len(a) for a in assignments])
    while sizes.min() == 0:
        donor = int(np.argmax(sizes))
        taker = int(np.argmin(sizes))
        assignments[taker].append(assignments[donor].pop())
        sizes = np.array([len(a) for a in assignments])

    shards = []
    for i, idx_list in enumerate(assignments):
        idx = np.sort(np.array(idx_list, dtype=int))
        shards.append(ClientDataset(features=features[idx], labels=labels[idx], client_id=i))
    return shards


def _shortcut_signal(labels: np.ndarray, classes: int, rng: np.random.Generator) -> np.ndarray:
    sign = np.where(labels < classes / 2.0, 1.0, -1.0)
    return sign + rng.normal(0.0, _SIGNAL_NOISE_SCALE, size=len(labels))


def inject_shortcut(
    shards: list[ClientDataset], rho: float, seed: int
) -> list[ClientDataset]:
    """Append one spurious column per client to every shard.

    Column i carries a label-dependent signal on client i's shard (each
    sample independently with probability ``rho``) and is standard-normal
    noise on every other shard. That makes it locally predictive but
    globally useless, the signature of a shortcut feature. Original columns
    are byte-identical in the output.
    """
    if not 0.0 <= rho <= 1.0:
        raise ConfigError("rho must lie in [0, 1]")
    m = len(shards)
    classes = int(max(s.labels.max() for s in shards)) + 1
    out = []
    for shard in shards:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 3, shard.client_id]))
        n = shard.n_samples
        extra = rng.normal(0.0, 1.0, size=(n, m))
        active = rng.random(n) < rho
        own = extra[:, shard.client_id].copy()
        signal = _shortcut_signal(shard.labels, classes, rng)
        own[active] = signal[active]
        extra[:, shard.client_id] = own
        out.append(
            ClientDataset(
                features=np.hstack([shard.features, extra]),
                labels=shard.labels,
                client_id=shard.client_id,
            )
        )
    return out


def append_noise_columns(features: np.ndarray, m: int, seed: int) -> np.ndarray:
    """Pad a held-out feature matrix with the m pure-noise shortcut columns.

    Test data belongs to no client, so its shortcut columns never carry
    signal; this keeps its width consistent with injected shards.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 4]))
    extra = rng.normal(0.0, 1.0, size=(len(features), m))
    return np.hstack([features, extra])


def save_csv(path, features: np.ndarray, labels: np.ndarray, label_column: str = "label") -> None:
    """Write a dataset as headered CSV; floats use repr so reloads are exact."""
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(features.shape[1])] + [label_column])
        for row, lab in zip(features, labels):
            writer.writerow([repr(float(v)) for v in row] + [int(lab)])


def load_csv(path, label_column: str = "label") -> tuple[np.ndarray, np.ndarray]:
    """Parse a headered CSV into (features, labels).

    Raises CsvFormatError with the 1-based line number for malformed rows,
    a schema error if the label column is absent, and an empty-dataset
    error for header-only files.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise CsvFormatError(f"{path}: no column named {label_column!r} in header")
        label_pos = header.index(label_column)
        feature_pos = [j for j in range(len(header)) if j != label_pos]

        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(
                    f"expected {len(header)} fields, found {len(row)}", line=lineno
                )
            try:
                rows.append([float(row[j]) for j in feature_pos])
                label = float(row[label_pos])
            except ValueError as exc:
                raise CsvFormatError(str(exc), line=lineno) from None
            if label != int(label):
                raise CsvFormatError(f"label {row[label_pos]!r} is not an integer", line=lineno)
            labels.append(int(label))

    if not rows:
        raise EmptyInputError(f"{path}: no data rows after the header")
    return np.array(rows, dtype=float), np.array(labels, dtype=np.int64)
