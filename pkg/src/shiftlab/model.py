"""Multinomial logistic (softmax-linear) classifier with exact hand-derived
gradients, deterministic mini-batch pretraining, and a text checkpoint format.

``SoftmaxClassifier`` wraps the functional core in a scikit-learn estimator so
the model composes with pipelines, ``clone`` and grid search.  The online
adapters in :mod:`shiftlab.methods` operate on the plain ``ModelParams``
container directly.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .data import LabeledPool
from .errors import DegenerateInputError
from .validation import as_float_array, check_labels, check_matching_rows

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "shiftlab-softmax-v1"


@dataclass
class ModelParams:
    """Weights (num_classes x dim) and biases (num_classes,) of the classifier."""

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        self.weights = as_float_array(self.weights, "weights", ndim=2)
        self.biases = as_float_array(self.biases, "biases", ndim=1)
        if self.weights.shape[0] != self.biases.shape[0]:
            raise ValueError("weights and biases disagree on the number of classes")

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(self.weights.copy(), self.biases.copy())


def init_params(num_classes: int, dim: int, seed: int) -> ModelParams:
    """Seeded symmetric-uniform weights scaled by 1/sqrt(dim); zero biases."""
    rng = np.random.default_rng(seed)
    limit = 1.0 / math.sqrt(dim)
    weights = rng.uniform(-limit, limit, size=(num_classes, dim))
    return ModelParams(weights, np.zeros(num_classes))


def softmax_probs(params: ModelParams, X) -> np.ndarray:
    """Row-wise softmax of ``X @ W.T + b`` with max-subtraction for overflow safety."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.dim:
        raise ValueError(f"inputs must be (n, {params.dim}), got {X.shape}")
    logits = X @ params.weights.T + params.biases
    logits -= logits.max(axis=1, keepdims=True)
    np.exp(logits, out=logits)
    logits /= logits.sum(axis=1, keepdims=True)
    return logits


def forward(params: ModelParams, x) -> np.ndarray:
    """Softmax output for a single feature vector."""
    x = as_float_array(x, "x", ndim=1)
    return softmax_probs(params, x[np.newaxis, :])[0]


def batch_prediction(params: ModelParams, batch) -> np.ndarray:
    """Mean softmax output over a batch (accepts a StreamBatch or raw inputs)."""
    inputs = getattr(batch, "inputs", batch)
    probs = softmax_probs(params, inputs)
    return probs.mean(axis=0)


def loss_and_grad(
    params: ModelParams, X, y, sample_weights=None
) -> tuple[float, ModelParams]:
    """Weighted cross-entropy and its exact gradient.

    loss = sum_i w_i * CE(softmax(W x_i + b), y_i) / sum_i w_i

    Parameters
    ----------
    sample_weights : array_like or None
        Per-sample non-negative weights; None means uniform.  All-zero
        weights raise DegenerateInputError.

    Returns
    -------
    (loss, grad) where grad is ModelParams-shaped.
    """
    X = np.asarray(X, dtype=np.float64)
    y = check_labels(y, params.num_classes)
    check_matching_rows(X, y)
    if sample_weights is None:
        w = np.ones(len(y))
    else:
        w = as_float_array(sample_weights, "sample_weights", ndim=1)
        check_matching_rows(X, w, "inputs", "sample_weights")
        if np.any(w < 0):
            raise ValueError("sample_weights must be non-negative")
    total = float(w.sum())
    if total == 0.0:
        raise DegenerateInputError("sample_weights sum to zero")

    probs = softmax_probs(params, X)
    picked = probs[np.arange(len(y)), y]
    loss = float(np.dot(w, -np.log(np.maximum(picked, 1e-300)))) / total

    delta = probs
    delta[np.arange(len(y)), y] -= 1.0
    delta *= (w / total)[:, np.newaxis]
    grad_w = delta.T @ X
    grad_b = delta.sum(axis=0)
    return loss, ModelParams(grad_w, grad_b)


def accuracy(params: ModelParams, X, y) -> float:
    """Top-1 accuracy of the argmax prediction."""
    y = check_labels(y, params.num_classes)
    preds = softmax_probs(params, X).argmax(axis=1)
    return float(np.mean(preds == y))


def pretrain(pool: LabeledPool, epochs: int, lr: float, batch_size: int, seed: int) -> ModelParams:
    """Deterministic mini-batch gradient descent on unweighted cross-entropy."""
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    if lr <= 0:
        raise ValueError("lr must be positive")
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    rng = np.random.default_rng(seed)
    params = init_params(pool.num_classes, pool.dim, seed)
    n = len(pool)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            rows = order[start : start + batch_size]
            _, grad = loss_and_grad(params, pool.inputs[rows], pool.labels[rows])
            params.weights -= lr * grad.weights
            params.biases -= lr * grad.biases
    final_acc = accuracy(params, pool.inputs, pool.labels)
    logger.info("pretrain finished: epochs=%d lr=%g train_accuracy=%.4f", epochs, lr, final_acc)
    return params


def save_checkpoint(params: ModelParams, path, seed: int = 0) -> None:
    """Write a self-describing JSON checkpoint; floats round-trip bit-exactly."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "num_classes": params.num_classes,
        "dim": params.dim,
        "seed": int(seed),
        "weights": [float(v) for v in params.weights.ravel(order="C")],
        "biases": [float(v) for v in params.biases],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    """Read a checkpoint written by :func:`save_checkpoint`."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unrecognized checkpoint format {doc.get('format')!r}")
    c, d = int(doc["num_classes"]), int(doc["dim"])
    weights = np.array(doc["weights"], dtype=np.float64).reshape(c, d)
    biases = np.array(doc["biases"], dtype=np.float64)
    meta = {"seed": int(doc.get("seed", 0))}
    return ModelParams(weights, biases), meta


class SoftmaxClassifier(BaseEstimator, ClassifierMixin):
    """Scikit-learn front end for the softmax-linear model.

    Labels must be the integers 0..C-1.  ``fit`` runs the deterministic
    mini-batch pretraining loop; the learned state lives in ``params_``.
    """

    def __init__(self, epochs: int = 30, lr: float = 0.1, batch_size: int = 64, seed: int = 0):
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, X, y):
        pool = LabeledPool(np.asarray(X, dtype=np.float64), np.asarray(y))
        self.params_ = pretrain(pool, self.epochs, self.lr, self.batch_size, self.seed)
        self.classes_ = np.arange(pool.num_classes)
        self.n_features_in_ = pool.dim
        self.train_accuracy_ = accuracy(self.params_, pool.inputs, pool.labels)
        return self

    def predict_proba(self, X):
        return softmax_probs(self.params_, np.asarray(X, dtype=np.float64))

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)
