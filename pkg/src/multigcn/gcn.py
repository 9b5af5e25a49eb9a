"""Two-layer graph convolutional network trained by manual backpropagation.

The forward model is

    Z = softmax(A_hat * relu(A_hat * X * W0) * W1)

with inverted dropout on the inputs and hidden activations during training,
mean cross-entropy over the labeled training rows plus an L2 penalty on W0,
Adam updates, and early stopping on validation loss. Everything is plain
numpy; A_hat may be a scipy sparse matrix or a dense array.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    max_epochs: int = 200
    hidden_units: int = 16
    dropout: float = 0.5
    weight_decay: float = 5e-4  # applied to W0 only
    early_stop_patience: int = 10
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.hidden_units < 1:
            raise ValueError("hidden_units must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")


@dataclass(frozen=True)
class GcnModel:
    """Input-to-hidden and hidden-to-output weight matrices."""

    W0: np.ndarray
    W1: np.ndarray

    def __post_init__(self):
        W0 = np.asarray(self.W0, dtype=np.float64)
        W1 = np.asarray(self.W1, dtype=np.float64)
        if W0.ndim != 2 or W1.ndim != 2 or W0.shape[1] != W1.shape[0]:
            raise ValueError(f"inconsistent weight shapes {W0.shape} and {W1.shape}")
        if not (np.isfinite(W0).all() and np.isfinite(W1).all()):
            raise ValueError("model weights contain non-finite values")
        object.__setattr__(self, "W0", W0)
        object.__setattr__(self, "W1", W1)


@dataclass(frozen=True)
class LabeledSplit:
    """Disjoint train/val/test vertex indices plus per-vertex labels.

    labels has length n with -1 marking unlabeled vertices; every index in
    the three lists must be labeled.
    """

    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        train = np.asarray(self.train_idx, dtype=np.int64)
        val = np.asarray(self.val_idx, dtype=np.int64)
        test = np.asarray(self.test_idx, dtype=np.int64)
        labels = np.asarray(self.labels, dtype=np.int64)
        sets = [set(train.tolist()), set(val.tolist()), set(test.tolist())]
        if len(sets[0]) != len(train) or len(sets[1]) != len(val) or len(sets[2]) != len(test):
            raise ValueError("split lists contain repeated indices")
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ValueError("train/val/test sets must be pairwise disjoint")
        for name, idx in (("train", train), ("val", val), ("test", test)):
            if idx.size and (idx.min() < 0 or idx.max() >= len(labels)):
                raise ValueError(f"{name} indices out of range")
            if idx.size and (labels[idx] < 0).any():
                raise ValueError(f"{name} set contains unlabeled vertices")
        for arr in (train, val, test, labels):
            arr.setflags(write=False)
        object.__setattr__(self, "train_idx", train)
        object.__setattr__(self, "val_idx", val)
        object.__setattr__(self, "test_idx", test)
        object.__setattr__(self, "labels", labels)


class EpochRecord(NamedTuple):
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float


def _check_finite(arr, layer):
    if not np.isfinite(arr).all():
        raise FloatingPointError(f"non-finite values in {layer}")


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _dropout_mask(rng, shape, rate):
    # Inverted scaling keeps activations unbiased in expectation.
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _forward_cache(model, A_hat, X, masks):
    mask_x, mask_h = masks
    Xd = X * mask_x if mask_x is not None else X
    XW = Xd @ model.W0
    H_pre = A_hat @ XW
    _check_finite(H_pre, "hidden pre-activation")
    H = np.maximum(H_pre, 0.0)
    Hd = H * mask_h if mask_h is not None else H
    HW = Hd @ model.W1
    logits = A_hat @ HW
    _check_finite(logits, "output logits")
    return Xd, H_pre, Hd, logits


def forward(model: GcnModel, A_hat, X, *, dropout_active: bool = False, dropout: float = 0.5, seed: int = 0):
    """Row-stochastic class probabilities for every vertex.

    Dropout masks (on X and the hidden activations) are drawn from a
    generator seeded with `seed` and only when dropout_active.
    """
    X = np.asarray(X, dtype=np.float64)
    _validate_shapes(model, A_hat, X)
    masks = (None, None)
    if dropout_active and dropout > 0.0:
        rng = np.random.default_rng(seed)
        masks = (
            _dropout_mask(rng, X.shape, dropout),
            _dropout_mask(rng, (X.shape[0], model.W0.shape[1]), dropout),
        )
    logits = _forward_cache(model, A_hat, X, masks)[3]
    probs = np.exp(_log_softmax(logits))
    _check_finite(probs, "softmax output")
    return probs


def _validate_shapes(model, A_hat, X):
    n = X.shape[0]
    if A_hat.shape != (n, n):
        raise ValueError(f"A_hat shape {A_hat.shape} does not match n={n}")
    if X.shape[1] != model.W0.shape[0]:
        raise ValueError(f"feature dim {X.shape[1]} does not match W0 rows {model.W0.shape[0]}")


def _loss_and_grads_impl(model, A_hat, X, split, cfg, dropout_rng):
    masks = (None, None)
    if dropout_rng is not None and cfg.dropout > 0.0:
        masks = (
            _dropout_mask(dropout_rng, X.shape, cfg.dropout),
            _dropout_mask(dropout_rng, (X.shape[0], model.W0.shape[1]), cfg.dropout),
        )
    Xd, H_pre, Hd, logits = _forward_cache(model, A_hat, X, masks)
    train = split.train_idx
    if train.size == 0:
        raise ValueError("empty training set")
    y = split.labels[train]
    log_probs = _log_softmax(logits)
    ce = -log_probs[train, y].mean()
    loss = ce + 0.5 * cfg.weight_decay * float((model.W0**2).sum())

    # d(loss)/d(logits): softmax cross-entropy over the training rows only.
    G = np.zeros_like(logits)
    G[train] = np.exp(log_probs[train])
    G[train, y] -= 1.0
    G /= train.size

    dHW = A_hat @ G  # A_hat is symmetric, so A' G = A G
    dW1 = Hd.T @ dHW
    dHd = dHW @ model.W1.T
    dH = dHd * masks[1] if masks[1] is not None else dHd
    dH_pre = dH * (H_pre > 0.0)
    dXW = A_hat @ dH_pre
    dW0 = Xd.T @ dXW + cfg.weight_decay * model.W0
    return float(loss), (dW0, dW1)


def loss_and_grads(model: GcnModel, A_hat, X, split: LabeledSplit, cfg: TrainConfig, *, dropout_seed=None):
    """Training loss and exact gradients for W0 and W1.

    Loss is mean cross-entropy over the training rows plus
    0.5 * weight_decay * ||W0||_F^2. Dropout participates only when
    dropout_seed is given (the backward pass reuses the same masks).
    """
    X = np.asarray(X, dtype=np.float64)
    _validate_shapes(model, A_hat, X)
    rng = np.random.default_rng(dropout_seed) if dropout_seed is not None else None
    return _loss_and_grads_impl(model, A_hat, X, split, cfg, rng)


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def initial_model(cfg: TrainConfig, num_features: int, num_classes: int) -> GcnModel:
    """Glorot-uniform initialization on a stream derived only from cfg.seed."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2)[0])
    W0 = _glorot(rng, num_features, cfg.hidden_units)
    W1 = _glorot(rng, cfg.hidden_units, num_classes)
    return GcnModel(W0=W0, W1=W1)


def _cross_entropy(model, A_hat, X, idx, labels):
    logits = _forward_cache(model, A_hat, X, (None, None))[3]
    return -float(_log_softmax(logits)[idx, labels[idx]].mean())


def train(A_hat, X, split: LabeledSplit, cfg: TrainConfig, *, num_classes=None):
    """Full-batch Adam training; returns (best model, per-epoch history).

    Stops early when validation loss has not improved for
    early_stop_patience consecutive epochs and returns the weights from the
    best-validation-loss epoch. Dropout draws from a dedicated RNG stream so
    disabling it never changes the initialization. Deterministic given seed.
    """
    X = np.asarray(X, dtype=np.float64)
    if num_classes is None:
        labeled = split.labels[split.labels >= 0]
        if labeled.size == 0:
            raise ValueError("split has no labeled vertices")
        num_classes = int(labeled.max()) + 1
    model = initial_model(cfg, X.shape[1], num_classes)
    _validate_shapes(model, A_hat, X)
    dropout_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2)[1])
    use_dropout = cfg.dropout > 0.0

    m0 = np.zeros_like(model.W0)
    v0 = np.zeros_like(model.W0)
    m1 = np.zeros_like(model.W1)
    v1 = np.zeros_like(model.W1)
    b1, b2, eps, lr = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.learning_rate

    has_val = split.val_idx.size > 0
    best_val = np.inf
    best_model = model
    stale = 0
    history = []
    for epoch in range(1, cfg.max_epochs + 1):
        loss, (dW0, dW1) = _loss_and_grads_impl(
            model, A_hat, X, split, cfg, dropout_rng if use_dropout else None
        )
        m0 = b1 * m0 + (1 - b1) * dW0
        v0 = b2 * v0 + (1 - b2) * dW0**2
        m1 = b1 * m1 + (1 - b1) * dW1
        v1 = b2 * v1 + (1 - b2) * dW1**2
        c1 = 1 - b1**epoch
        c2 = 1 - b2**epoch
        W0 = model.W0 - lr * (m0 / c1) / (np.sqrt(v0 / c2) + eps)
        W1 = model.W1 - lr * (m1 / c1) / (np.sqrt(v1 / c2) + eps)
        model = GcnModel(W0=W0, W1=W1)

        if has_val:
            val_loss = _cross_entropy(model, A_hat, X, split.val_idx, split.labels)
            val_acc = evaluate(model, A_hat, X, split.val_idx, split.labels)
        else:
            val_loss, val_acc = float("nan"), float("nan")
        history.append(EpochRecord(epoch, loss, val_loss, val_acc))

        if has_val:
            if val_loss < best_val:
                best_val = val_loss
                best_model = model
                stale = 0
            else:
                stale += 1
                if stale >= cfg.early_stop_patience:
                    break
    if not has_val:
        best_model = model
    return best_model, history


def evaluate(model: GcnModel, A_hat, X, idx, labels) -> float:
    """Accuracy of argmax predictions on the given vertices (dropout off).

    Ties in the output distribution resolve to the lowest class id.
    """
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("cannot evaluate on an empty index set")
    labels = np.asarray(labels, dtype=np.int64)
    probs = forward(model, A_hat, np.asarray(X, dtype=np.float64))
    preds = probs[idx].argmax(axis=1)  # argmax returns the first (lowest) maximizer
    return float((preds == labels[idx]).mean())


_MODEL_MAGIC = b"MGCNMODL"


def save_model(model: GcnModel, path) -> None:
    """Checkpoint format: 8-byte magic, uint64 F, H, C (little endian),
    then row-major float64 for W0 (F*H) and W1 (H*C)."""
    F, H = model.W0.shape
    C = model.W1.shape[1]
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        fh.write(struct.pack("<QQQ", F, H, C))
        fh.write(np.ascontiguousarray(model.W0, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.W1, dtype="<f8").tobytes())


def load_model(path) -> GcnModel:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MODEL_MAGIC))
        if magic != _MODEL_MAGIC:
            raise ValueError(f"{path}: not a model checkpoint (bad magic {magic!r})")
        F, H, C = struct.unpack("<QQQ", fh.read(24))
        want = F * H + H * C
        payload = np.frombuffer(fh.read(want * 8), dtype="<f8")
        if payload.size != want:
            raise ValueError(f"{path}: truncated checkpoint ({payload.size} of {want} values)")
    W0 = payload[: F * H].reshape(F, H).astype(np.float64)
    W1 = payload[F * H :].reshape(H, C).astype(np.float64)
    return GcnModel(W0=W0, W1=W1)


def write_history_csv(history, path) -> None:
    """Emit per-epoch stats as CSV: epoch, train_loss, val_loss, val_acc."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "val_acc"])
        for rec in history:
            writer.writerow([rec.epoch, repr(rec.train_loss), repr(rec.val_loss), repr(rec.val_acc)])
