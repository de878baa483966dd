"""Linear and MLP rankers trained by plain mini-batch gradient descent.

Three families share one training loop shape: a binary logistic ranker
(single sigmoid output), a multiclass softmax ranker, and a one-hidden-
layer MLP with independent sigmoid outputs. Losses are instance means
(the MLP additionally averages over outputs) plus an L2 penalty of
l2_strength/2 times the squared weight norms; biases are never
regularized, so the L2 term contributes exactly l2_strength * w to each
weight gradient. Training is deterministic given (data, config, seed):
zero or seeded initialization and a seeded per-epoch shuffle.

loss_and_gradient exposes the exact objective and analytic gradient used
by the update steps, so finite-difference checks exercise the production
gradient code.
"""

from __future__ import annotations

import json
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix, issparse
from scipy.special import expit

from .errors import (
    DimensionMismatch,
    EmptyTrainingSet,
    InvalidConfig,
    LengthMismatch,
    ParseError,
    WidthMismatch,
)
from .features import SparseVector, stack

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings shared by all model families."""

    learning_rate: float = 0.5
    epochs: int = 60
    l2_strength: float = 1e-4
    batch_size: int = 256
    seed: int = 0
    hidden_size: int = 16

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise InvalidConfig("learning_rate must be positive")
        if self.epochs < 0:
            raise InvalidConfig("epochs must be non-negative")
        if self.l2_strength < 0:
            raise InvalidConfig("l2_strength must be non-negative")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be at least 1")
        if self.hidden_size < 1:
            raise InvalidConfig("hidden_size must be at least 1")


@dataclass
class LinearModel:
    """Linear scorer: weights (K, D) and bias (K,).

    K = 1 is the binary sigmoid family; K > 1 is the softmax family.
    """

    weights: np.ndarray
    bias: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return int(self.weights.shape[0])

    @property
    def dim(self) -> int:
        return int(self.weights.shape[1])


@dataclass
class MlpModel:
    """One ReLU hidden layer, independent sigmoid outputs."""

    w_hidden: np.ndarray  # (D, H)
    b_hidden: np.ndarray  # (H,)
    w_out: np.ndarray  # (H, M)
    b_out: np.ndarray  # (M,)
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(self.w_hidden.shape[0])

    @property
    def n_outputs(self) -> int:
        return int(self.w_out.shape[1])


def derive_seed(seed: int, code: str) -> int:
    """Per-code seed: base seed XOR a stable hash of the code string."""
    return (seed ^ zlib.crc32(code.encode("utf-8"))) & 0x7FFFFFFF


def _as_csr(features: csr_matrix | Sequence[SparseVector]) -> csr_matrix:
    if issparse(features):
        return features.tocsr()
    return stack(list(features))


def _softplus(z: np.ndarray) -> np.ndarray:
    # log(1 + e^z), stable for large |z|.
    return np.logaddexp(0.0, z)


# --- shared loss/gradient kernels -------------------------------------------


def _binary_step(W: np.ndarray, B: np.ndarray, X: csr_matrix, Y: np.ndarray, l2: float):
    """Summed per-column mean BCE loss and gradients for K independent sigmoid columns."""
    m = X.shape[0]
    Z = X @ W.T + B
    P = expit(Z)
    loss = float(np.sum(_softplus(Z) - Y * Z) / m + 0.5 * l2 * np.sum(W * W))
    G = (P - Y) / m
    gW = (X.T @ G).T + l2 * W
    gB = G.sum(axis=0)
    return loss, gW, gB


def _softmax_step(W: np.ndarray, B: np.ndarray, X: csr_matrix, Y: np.ndarray, l2: float):
    """Mean cross-entropy loss and gradients for one softmax over K classes.

    Y is one-hot (m, K).
    """
    m = X.shape[0]
    Z = X @ W.T + B
    Zmax = Z.max(axis=1, keepdims=True)
    logits = Z - Zmax
    lse = np.log(np.exp(logits).sum(axis=1, keepdims=True))
    logp = logits - lse
    loss = float(-np.sum(Y * logp) / m + 0.5 * l2 * np.sum(W * W))
    P = np.exp(logp)
    G = (P - Y) / m
    gW = (X.T @ G).T + l2 * W
    gB = G.sum(axis=0)
    return loss, gW, gB


def _mlp_step(
    w1: np.ndarray,
    b1: np.ndarray,
    w2: np.ndarray,
    b2: np.ndarray,
    X: csr_matrix,
    Y: np.ndarray,
    l2: float,
):
    """Mean-over-instances-and-outputs BCE loss and gradients for the MLP."""
    m = X.shape[0]
    n_out = w2.shape[1]
    Z1 = X @ w1 + b1
    A = np.maximum(Z1, 0.0)
    Z2 = A @ w2 + b2
    loss = float(
        np.sum(_softplus(Z2) - Y * Z2) / (m * n_out)
        + 0.5 * l2 * (np.sum(w1 * w1) + np.sum(w2 * w2))
    )
    dZ2 = (expit(Z2) - Y) / (m * n_out)
    gw2 = A.T @ dZ2 + l2 * w2
    gb2 = dZ2.sum(axis=0)
    dA = dZ2 @ w2.T
    dZ1 = dA * (Z1 > 0.0)
    gw1 = (X.T @ dZ1) + l2 * w1
    gb1 = dZ1.sum(axis=0)
    return loss, gw1, gb1, gw2, gb2


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _check_xy(X: csr_matrix, n_labels: int) -> None:
    if X.shape[0] == 0:
        raise EmptyTrainingSet("no training instances")
    if X.shape[0] != n_labels:
        raise LengthMismatch(f"{X.shape[0]} feature rows vs {n_labels} labels")


# --- binary family -----------------------------------------------------------


def _run_binary_gd(
    W: np.ndarray, B: np.ndarray, X: csr_matrix, Y: np.ndarray, config: TrainConfig
) -> None:
    rng = np.random.default_rng(config.seed)
    lr = config.learning_rate
    for _ in range(config.epochs):
        for idx in _epoch_batches(X.shape[0], config.batch_size, rng):
            _, gW, gB = _binary_step(W, B, X[idx], Y[idx], config.l2_strength)
            W -= lr * gW
            B -= lr * gB


def train_binary_lr(
    features: csr_matrix | Sequence[SparseVector],
    labels: Sequence[bool] | np.ndarray,
    config: TrainConfig,
    meta: dict | None = None,
) -> LinearModel:
    """Train a binary logistic ranker from zero-initialized parameters.

    epochs = 0 returns the zero model, which scores every instance 0.5.
    """
    config.validate()
    X = _as_csr(features)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    _check_xy(X, y.size)
    W = np.zeros((1, X.shape[1]))
    B = np.zeros(1)
    _run_binary_gd(W, B, X, y[:, None], config)
    return LinearModel(weights=W, bias=B, meta=dict(meta or {}))


def train_many_binary(
    features: csr_matrix | Sequence[SparseVector],
    labels_by_code: Mapping[str, np.ndarray],
    config: TrainConfig,
    meta: dict | None = None,
) -> dict[str, LinearModel]:
    """Train one binary ranker per code in a single vectorized pass.

    The per-code losses never interact, so stacking the label columns and
    updating a (K, D) weight matrix yields, for each code, the model that
    column's gradient descent would produce. All columns share the shuffle
    schedule derived from config.seed.
    """
    config.validate()
    X = _as_csr(features)
    codes = sorted(labels_by_code)
    if not codes:
        return {}
    Y = np.column_stack([np.asarray(labels_by_code[c], dtype=np.float64).reshape(-1) for c in codes])
    _check_xy(X, Y.shape[0])
    W = np.zeros((len(codes), X.shape[1]))
    B = np.zeros(len(codes))
    _run_binary_gd(W, B, X, Y, config)
    out = {}
    for k, code in enumerate(codes):
        code_meta = dict(meta or {})
        code_meta["target"] = code
        out[code] = LinearModel(weights=W[k : k + 1].copy(), bias=B[k : k + 1].copy(), meta=code_meta)
    return out


# --- multiclass family --------------------------------------------------------


def train_multiclass_lr(
    features: csr_matrix | Sequence[SparseVector],
    classes: Sequence[int] | np.ndarray,
    config: TrainConfig,
    n_classes: int = 3,
    meta: dict | None = None,
) -> LinearModel:
    """Train a softmax ranker from zero-initialized parameters.

    Warns when some class never occurs in the training labels; the model
    still trains (that class's probability is just pushed toward zero).
    """
    config.validate()
    X = _as_csr(features)
    y = np.asarray(classes, dtype=np.int64).reshape(-1)
    _check_xy(X, y.size)
    if n_classes < 2:
        raise InvalidConfig("n_classes must be at least 2")
    if y.min() < 0 or y.max() >= n_classes:
        raise InvalidConfig(f"class labels must lie in 0..{n_classes - 1}")
    present = np.unique(y)
    if present.size < n_classes:
        absent = sorted(set(range(n_classes)) - set(int(c) for c in present))
        warnings.warn(f"classes {absent} absent from training labels", stacklevel=2)
    Y = np.zeros((y.size, n_classes))
    Y[np.arange(y.size), y] = 1.0
    W = np.zeros((n_classes, X.shape[1]))
    B = np.zeros(n_classes)
    rng = np.random.default_rng(config.seed)
    lr = config.learning_rate
    for _ in range(config.epochs):
        for idx in _epoch_batches(X.shape[0], config.batch_size, rng):
            _, gW, gB = _softmax_step(W, B, X[idx], Y[idx], config.l2_strength)
            W -= lr * gW
            B -= lr * gB
    return LinearModel(weights=W, bias=B, meta=dict(meta or {}))


# --- MLP family ---------------------------------------------------------------


def train_mlp_br(
    features: csr_matrix | Sequence[SparseVector],
    label_matrix: np.ndarray,
    config: TrainConfig,
    meta: dict | None = None,
) -> MlpModel:
    """Train the shared-hidden-layer sigmoid-output MLP.

    label_matrix is (n, M) with one column per output. Weights start
    uniform in +-1/sqrt(fan_in) from the config seed; biases start at zero.
    """
    config.validate()
    X = _as_csr(features)
    Y = np.asarray(label_matrix, dtype=np.float64)
    if Y.ndim != 2:
        raise WidthMismatch("label_matrix must be two-dimensional")
    _check_xy(X, Y.shape[0])
    D, H, M = X.shape[1], config.hidden_size, Y.shape[1]
    if M < 1:
        raise WidthMismatch("label_matrix needs at least one output column")
    rng = np.random.default_rng(config.seed)
    lim1 = 1.0 / np.sqrt(max(D, 1))
    lim2 = 1.0 / np.sqrt(H)
    w1 = rng.uniform(-lim1, lim1, size=(D, H))
    b1 = np.zeros(H)
    w2 = rng.uniform(-lim2, lim2, size=(H, M))
    b2 = np.zeros(M)
    lr = config.learning_rate
    for _ in range(config.epochs):
        for idx in _epoch_batches(X.shape[0], config.batch_size, rng):
            _, gw1, gb1, gw2, gb2 = _mlp_step(w1, b1, w2, b2, X[idx], Y[idx], config.l2_strength)
            w1 -= lr * gw1
            b1 -= lr * gb1
            w2 -= lr * gw2
            b2 -= lr * gb2
    return MlpModel(w_hidden=w1, b_hidden=b1, w_out=w2, b_out=b2, meta=dict(meta or {}))


# --- continuation and gradients -----------------------------------------------


def fine_tune(
    model: LinearModel | MlpModel,
    features: csr_matrix | Sequence[SparseVector],
    labels: np.ndarray | Sequence,
    config: TrainConfig,
) -> LinearModel | MlpModel:
    """Continue gradient descent from a trained model's parameters.

    Fine-tuning a zero-initialized model equals training from scratch with
    the same configuration and seed. The input model is left untouched.
    """
    config.validate()
    X = _as_csr(features)
    if isinstance(model, LinearModel):
        if X.shape[1] != model.dim:
            raise DimensionMismatch(f"features have dim {X.shape[1]}, model has {model.dim}")
        W = model.weights.copy()
        B = model.bias.copy()
        if model.n_classes == 1:
            y = np.asarray(labels, dtype=np.float64).reshape(-1)
            _check_xy(X, y.size)
            _run_binary_gd(W, B, X, y[:, None], config)
        else:
            y = np.asarray(labels, dtype=np.int64).reshape(-1)
            _check_xy(X, y.size)
            if y.min() < 0 or y.max() >= model.n_classes:
                raise WidthMismatch(f"class labels must lie in 0..{model.n_classes - 1}")
            Y = np.zeros((y.size, model.n_classes))
            Y[np.arange(y.size), y] = 1.0
            rng = np.random.default_rng(config.seed)
            for _ in range(config.epochs):
                for idx in _epoch_batches(X.shape[0], config.batch_size, rng):
                    _, gW, gB = _softmax_step(W, B, X[idx], Y[idx], config.l2_strength)
                    W -= config.learning_rate * gW
                    B -= config.learning_rate * gB
        return LinearModel(weights=W, bias=B, meta=dict(model.meta))
    if isinstance(model, MlpModel):
        if X.shape[1] != model.dim:
            raise DimensionMismatch(f"features have dim {X.shape[1]}, model has {model.dim}")
        Y = np.asarray(labels, dtype=np.float64)
        if Y.ndim != 2 or Y.shape[1] != model.n_outputs:
            raise WidthMismatch(f"label matrix must have {model.n_outputs} columns")
        _check_xy(X, Y.shape[0])
        w1, b1 = model.w_hidden.copy(), model.b_hidden.copy()
        w2, b2 = model.w_out.copy(), model.b_out.copy()
        rng = np.random.default_rng(config.seed)
        for _ in range(config.epochs):
            for idx in _epoch_batches(X.shape[0], config.batch_size, rng):
                _, gw1, gb1, gw2, gb2 = _mlp_step(w1, b1, w2, b2, X[idx], Y[idx], config.l2_strength)
                w1 -= config.learning_rate * gw1
                b1 -= config.learning_rate * gb1
                w2 -= config.learning_rate * gw2
                b2 -= config.learning_rate * gb2
        return MlpModel(w_hidden=w1, b_hidden=b1, w_out=w2, b_out=b2, meta=dict(model.meta))
    raise InvalidConfig(f"unsupported model type {type(model).__name__}")


def loss_and_gradient(
    model: LinearModel | MlpModel,
    features: csr_matrix | Sequence[SparseVector],
    labels: np.ndarray | Sequence,
    l2_strength: float = 0.0,
) -> tuple[float, dict[str, np.ndarray]]:
    """Objective value and analytic gradient on one batch.

    Returns the exact quantities the training updates use, keyed by
    parameter name, so numerical differentiation can check them.
    """
    X = _as_csr(features)
    if X.shape[1] != model.dim:
        raise DimensionMismatch(f"features have dim {X.shape[1]}, model has {model.dim}")
    if isinstance(model, LinearModel):
        if model.n_classes == 1:
            y = np.asarray(labels, dtype=np.float64).reshape(-1)
            _check_xy(X, y.size)
            loss, gW, gB = _binary_step(model.weights, model.bias, X, y[:, None], l2_strength)
        else:
            y = np.asarray(labels, dtype=np.int64).reshape(-1)
            _check_xy(X, y.size)
            Y = np.zeros((y.size, model.n_classes))
            Y[np.arange(y.size), y] = 1.0
            loss, gW, gB = _softmax_step(model.weights, model.bias, X, Y, l2_strength)
        return loss, {"weights": gW, "bias": gB}
    if isinstance(model, MlpModel):
        Y = np.asarray(labels, dtype=np.float64)
        if Y.ndim != 2 or Y.shape[1] != model.n_outputs:
            raise WidthMismatch(f"label matrix must have {model.n_outputs} columns")
        _check_xy(X, Y.shape[0])
        loss, gw1, gb1, gw2, gb2 = _mlp_step(
            model.w_hidden, model.b_hidden, model.w_out, model.b_out, X, Y, l2_strength
        )
        return loss, {"w_hidden": gw1, "b_hidden": gb1, "w_out": gw2, "b_out": gb2}
    raise InvalidConfig(f"unsupported model type {type(model).__name__}")


# --- prediction ---------------------------------------------------------------


def _as_row(x: SparseVector | csr_matrix) -> csr_matrix:
    if issparse(x):
        return x.tocsr()
    return stack([x])


def predict_prob(model: LinearModel, x: SparseVector | csr_matrix) -> float:
    """Positive-class probability of one instance under a binary model."""
    return float(predict_prob_batch(model, _as_row(x))[0])


def predict_prob_batch(model: LinearModel, X: csr_matrix | Sequence[SparseVector]) -> np.ndarray:
    if model.n_classes != 1:
        raise WidthMismatch("predict_prob needs a single-output model")
    X = _as_csr(X)
    if X.shape[1] != model.dim:
        raise DimensionMismatch(f"features have dim {X.shape[1]}, model has {model.dim}")
    return expit((X @ model.weights.T + model.bias).reshape(-1))


def predict_class_probs(model: LinearModel, x: SparseVector | csr_matrix) -> np.ndarray:
    """Softmax class probabilities of one instance."""
    return predict_class_probs_batch(model, _as_row(x))[0]


def predict_class_probs_batch(
    model: LinearModel, X: csr_matrix | Sequence[SparseVector]
) -> np.ndarray:
    if model.n_classes < 2:
        raise WidthMismatch("class probabilities need a multiclass model")
    X = _as_csr(X)
    if X.shape[1] != model.dim:
        raise DimensionMismatch(f"features have dim {X.shape[1]}, model has {model.dim}")
    Z = X @ model.weights.T + model.bias
    Z -= Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def mlp_predict_batch(model: MlpModel, X: csr_matrix | Sequence[SparseVector]) -> np.ndarray:
    """Per-output sigmoid probabilities, shape (n, M)."""
    X = _as_csr(X)
    if X.shape[1] != model.dim:
        raise DimensionMismatch(f"features have dim {X.shape[1]}, model has {model.dim}")
    A = np.maximum(X @ model.w_hidden + model.b_hidden, 0.0)
    return expit(A @ model.w_out + model.b_out)


# --- persistence ---------------------------------------------------------------


def save_model(model: LinearModel | MlpModel, path: str | Path) -> None:
    """Write a model as versioned JSON with a metadata block."""
    if isinstance(model, LinearModel):
        payload = {
            "format_version": MODEL_FORMAT_VERSION,
            "family": "linear",
            "weights": model.weights.tolist(),
            "bias": model.bias.tolist(),
            "meta": model.meta,
        }
    elif isinstance(model, MlpModel):
        payload = {
            "format_version": MODEL_FORMAT_VERSION,
            "family": "mlp",
            "w_hidden": model.w_hidden.tolist(),
            "b_hidden": model.b_hidden.tolist(),
            "w_out": model.w_out.tolist(),
            "b_out": model.b_out.tolist(),
            "meta": model.meta,
        }
    else:
        raise InvalidConfig(f"unsupported model type {type(model).__name__}")
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
    )


def load_model(path: str | Path) -> LinearModel | MlpModel:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported model format version {version!r}")
    family = payload.get("family")
    if family == "linear":
        return LinearModel(
            weights=np.asarray(payload["weights"], dtype=np.float64),
            bias=np.asarray(payload["bias"], dtype=np.float64),
            meta=dict(payload.get("meta", {})),
        )
    if family == "mlp":
        return MlpModel(
            w_hidden=np.asarray(payload["w_hidden"], dtype=np.float64),
            b_hidden=np.asarray(payload["b_hidden"], dtype=np.float64),
            w_out=np.asarray(payload["w_out"], dtype=np.float64),
            b_out=np.asarray(payload["b_out"], dtype=np.float64),
            meta=dict(payload.get("meta", {})),
        )
    raise ParseError(f"{path}: unknown model family {family!r}")
