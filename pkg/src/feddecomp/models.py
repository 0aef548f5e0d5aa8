"""Small differentiable classifiers with closed-form loss gradients.

Two architectures are supported: multinomial softmax regression and a
one-hidden-layer ReLU MLP. Parameters live in a single flat float64 vector
so client updates can be exchanged, stacked, and decomposed as plain
vectors. The flat layout is fixed and documented here:

    softmax:  [W.ravel(), b]                  W is (C, d_in), b is (C,)
    mlp:      [W1.ravel(), b1, W2.ravel(), b2]
              W1 is (h, d_in), b1 is (h,), W2 is (C, h), b2 is (C,)

All ravels are row-major. The layout never changes within a process, so
flat vectors are portable across checkpoints written by this module.

The training loss is cross-entropy plus an optional margin-control penalty
log(1 + ‖logits‖²) weighted by ``margin_weight``; the penalty discourages
the large-margin solutions that latch onto locally predictive shortcut
features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, LabelError, ShapeError


@dataclass(frozen=True)
class Architecture:
    """Shape descriptor for a classifier; ``hidden`` is None for softmax."""

    kind: str  # "softmax" | "mlp"
    input_dim: int
    num_classes: int
    hidden: int | None = None

    def __post_init__(self):
        if self.kind not in ("softmax", "mlp"):
            raise ShapeError(f"unknown architecture kind {self.kind!r}")
        if self.kind == "mlp" and (self.hidden is None or self.hidden < 1):
            raise ShapeError("mlp needs a positive hidden width")
        if self.input_dim < 1 or self.num_classes < 2:
            raise ShapeError("need input_dim >= 1 and num_classes >= 2")

    @property
    def param_count(self) -> int:
        c, d = self.num_classes, self.input_dim
        if self.kind == "softmax":
            return c * d + c
        h = self.hidden
        return h * d + h + c * h + c

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "hidden": self.hidden,
        }

    @staticmethod
    def from_dict(d: dict) -> "Architecture":
        return Architecture(
            kind=d["kind"],
            input_dim=int(d["input_dim"]),
            num_classes=int(d["num_classes"]),
            hidden=None if d.get("hidden") is None else int(d["hidden"]),
        )


@dataclass(frozen=True)
class ModelParams:
    """An architecture plus its flat parameter vector."""

    arch: Architecture
    flat: np.ndarray

    def __post_init__(self):
        flat = np.asarray(self.flat, dtype=float)
        if flat.ndim != 1 or flat.shape[0] != self.arch.param_count:
            raise ShapeError(
                f"flat length {flat.shape} does not match "
                f"{self.arch.kind} param count {self.arch.param_count}"
            )
        object.__setattr__(self, "flat", flat)


@dataclass(frozen=True)
class LossReport:
    """Batch-mean losses and accuracy for one evaluation.

    ``total`` is ce + margin_weight * margin_penalty by construction;
    the penalty itself is stored unweighted.
    """

    ce: float
    margin_penalty: float
    total: float
    accuracy: float
    n_samples: int


def init_params(arch: Architecture, seed: int) -> ModelParams:
    """Seeded init: weights uniform(-s, s) with s = 1/sqrt(fan_in), zero biases."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, arch.param_count]))
    if arch.kind == "softmax":
        s = 1.0 / np.sqrt(arch.input_dim)
        w = rng.uniform(-s, s, size=(arch.num_classes, arch.input_dim))
        b = np.zeros(arch.num_classes)
        flat = np.concatenate([w.ravel(), b])
    else:
        h = arch.hidden
        s1 = 1.0 / np.sqrt(arch.input_dim)
        s2 = 1.0 / np.sqrt(h)
        w1 = rng.uniform(-s1, s1, size=(h, arch.input_dim))
        w2 = rng.uniform(-s2, s2, size=(arch.num_classes, h))
        flat = np.concatenate([w1.ravel(), np.zeros(h), w2.ravel(), np.zeros(arch.num_classes)])
    return ModelParams(arch=arch, flat=flat)


def zeros_like_params(arch: Architecture) -> ModelParams:
    return ModelParams(arch=arch, flat=np.zeros(arch.param_count))


def _unpack(params: ModelParams):
    a = params.arch
    f = params.flat
    c, d = a.num_classes, a.input_dim
    if a.kind == "softmax":
        w = f[: c * d].reshape(c, d)
        b = f[c * d : c * d + c]
        return w, b
    h = a.hidden
    o = 0
    w1 = f[o : o + h * d].reshape(h, d)
    o += h * d
    b1 = f[o : o + h]
    o += h
    w2 = f[o : o + c * h].reshape(c, h)
    o += c * h
    b2 = f[o : o + c]
    return w1, b1, w2, b2


def _batch_logits(params: ModelParams, x: np.ndarray):
    """Logits for an (n, d_in) batch; also returns MLP intermediates."""
    if x.ndim != 2 or x.shape[1] != params.arch.input_dim:
        raise ShapeError(
            f"feature batch shape {x.shape} does not match input_dim {params.arch.input_dim}"
        )
    if params.arch.kind == "softmax":
        w, b = _unpack(params)
        return x @ w.T + b, None
    w1, b1, w2, b2 = _unpack(params)
    pre = x @ w1.T + b1
    hidden = np.maximum(pre, 0.0)
    return hidden @ w2.T + b2, (pre, hidden)


def forward_logits(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Logit vector for a single feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ShapeError(f"expected a 1-D feature vector, got ndim={x.ndim}")
    logits, _ = _batch_logits(params, x[None, :])
    return logits[0]


def _softmax_stats(logits: np.ndarray, labels: np.ndarray):
    """Row-stable softmax probabilities and mean cross-entropy."""
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    log_p_true = z[np.arange(len(labels)), labels] - lse
    probs = np.exp(z - lse[:, None])
    return probs, float(-log_p_true.mean())


def _check_batch(x, y, num_classes: int):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    if x.ndim != 2:
        raise ShapeError(f"feature batch must be 2-D, got ndim={x.ndim}")
    if len(x) == 0:
        raise EmptyInputError("empty batch")
    if y.shape != (len(x),):
        raise ShapeError(f"labels shape {y.shape} does not match batch size {len(x)}")
    if not np.issubdtype(y.dtype, np.integer):
        yi = y.astype(int)
        if not np.array_equal(yi, y):
            raise LabelError("labels must be integers")
        y = yi
    if y.min() < 0 or y.max() >= num_classes:
        raise LabelError(f"labels must lie in [0, {num_classes})")
    return x, y


def loss_and_grad(
    params: ModelParams,
    x: np.ndarray,
    y: np.ndarray,
    margin_weight: float = 0.0,
) -> tuple[LossReport, np.ndarray]:
    """Batch-mean loss and its exact analytic gradient over the flat params.

    The per-sample objective is CE(y, f(x)) + margin_weight * log(1 + ‖f(x)‖²),
    averaged over the batch. The margin term backpropagates through the
    network via d/df = 2f / (1 + ‖f‖²).
    """
    x, y = _check_batch(x, y, params.arch.num_classes)
    logits, cache = _batch_logits(params, x)
    n = len(x)
    probs, ce = _softmax_stats(logits, y)
    sq_norms = np.sum(logits * logits, axis=1)
    margin_penalty = float(np.mean(np.log1p(sq_norms)))
    total = ce + margin_weight * margin_penalty
    accuracy = float(np.mean(np.argmax(logits, axis=1) == y))

    d_logits = probs.copy()
    d_logits[np.arange(n), y] -= 1.0
    d_logits /= n
    if margin_weight != 0.0:
        d_logits += (margin_weight / n) * (2.0 * logits / (1.0 + sq_norms)[:, None])

    if params.arch.kind == "softmax":
        dw = d_logits.T @ x
        db = d_logits.sum(axis=0)
        grad = np.concatenate([dw.ravel(), db])
    else:
        pre, hidden = cache
        _, _, w2, _ = _unpack(params)
        dw2 = d_logits.T @ hidden
        db2 = d_logits.sum(axis=0)
        d_hidden = d_logits @ w2
        d_pre = d_hidden * (pre > 0.0)
        dw1 = d_pre.T @ x
        db1 = d_pre.sum(axis=0)
        grad = np.concatenate([dw1.ravel(), db1, dw2.ravel(), db2])

    report = LossReport(
        ce=ce,
        margin_penalty=margin_penalty,
        total=total,
        accuracy=accuracy,
        n_samples=n,
    )
    return report, grad


def evaluate(
    params: ModelParams,
    features: np.ndarray,
    labels: np.ndarray,
    margin_weight: float = 0.0,
) -> LossReport:
    """Full-dataset mean loss and accuracy; parameters are not touched.

    Argmax ties resolve to the lowest class index (numpy argmax convention),
    so an all-zero model on a balanced set scores exactly the class-0 share.
    """
    x, y = _check_batch(features, labels, params.arch.num_classes)
    logits, _ = _batch_logits(params, x)
    _, ce = _softmax_stats(logits, y)
    sq_norms = np.sum(logits * logits, axis=1)
    margin_penalty = float(np.mean(np.log1p(sq_norms)))
    accuracy = float(np.mean(np.argmax(logits, axis=1) == y))
    return LossReport(
        ce=ce,
        margin_penalty=margin_penalty,
        total=ce + margin_weight * margin_penalty,
        accuracy=accuracy,
        n_samples=len(x),
    )


def mean_logit_sq_norm(params: ModelParams, features: np.ndarray) -> float:
    """Mean squared logit norm over a feature matrix (margin diagnostics)."""
    x = np.asarray(features, dtype=float)
    logits, _ = _batch_logits(params, x)
    return float(np.mean(np.sum(logits * logits, axis=1)))
