"""Unsupervised risk estimation: confusion matrix from the labeled holdout,
pseudo-label histograms on unlabeled batches, black-box inversion of the
prediction process, and the weighted class-wise risk objective.

The stored confusion matrix is the joint ``P(pred = i, true = j)`` on the
holdout.  Inverting the joint recovers the ratio between the current and the
holdout class priors; to estimate the current prior itself the column-normal-
ized (class-conditional) matrix must be inverted, which is what the online
adapters do via :func:`conditional_from_joint`.
"""

from __future__ import annotations

import numpy as np

from .data import LabeledPool
from .errors import InsufficientDataError
from .linalg import default_ridge, invert_ridge, project_simplex
from .model import ModelParams, loss_and_grad, softmax_probs
from .validation import check_distribution, check_square


def estimate_confusion(params: ModelParams, holdout: LabeledPool) -> np.ndarray:
    """Joint confusion matrix: entry (i, j) = #(pred i, true j) / holdout size."""
    if holdout.num_classes != params.num_classes:
        raise InsufficientDataError(
            f"holdout covers {holdout.num_classes} classes, model has {params.num_classes}"
        )
    preds = softmax_probs(params, holdout.inputs).argmax(axis=1)
    c = params.num_classes
    joint = np.zeros((c, c))
    np.add.at(joint, (preds, holdout.labels), 1.0)
    return joint / len(holdout)


def conditional_from_joint(joint) -> np.ndarray:
    """Column-normalize a joint confusion matrix into ``P(pred | true)``."""
    joint = check_square(joint, "confusion matrix")
    col_sums = joint.sum(axis=0)
    if np.any(col_sums <= 0):
        raise InsufficientDataError("confusion matrix has an empty true-label column")
    return joint / col_sums


def pseudo_label_distribution(params: ModelParams, batch) -> np.ndarray:
    """Normalized histogram of argmax predictions over an unlabeled batch."""
    inputs = getattr(batch, "inputs", batch)
    preds = softmax_probs(params, inputs).argmax(axis=1)
    counts = np.bincount(preds, minlength=params.num_classes).astype(np.float64)
    return counts / counts.sum()


def bbse(confusion, pseudo, ridge: float | None = None) -> np.ndarray:
    """Invert the prediction process and repair the estimate onto the simplex.

    Returns ``project_simplex(invert_ridge(confusion, ridge) @ pseudo)``.
    ``ridge=None`` uses the scale-aware default ``1e-6 * trace / C``.  Pass the
    column-conditional matrix (see :func:`conditional_from_joint`) to recover
    the current label distribution; inverting the raw joint yields prior
    ratios instead.
    """
    confusion = check_square(confusion, "confusion matrix")
    pseudo = check_distribution(pseudo, "pseudo-label distribution")
    if confusion.shape[0] != pseudo.size:
        raise ValueError("confusion matrix and pseudo distribution disagree on classes")
    if ridge is None:
        ridge = default_ridge(confusion)
    return project_simplex(invert_ridge(confusion, ridge) @ pseudo)


def class_wise_risk(params: ModelParams, holdout: LabeledPool, c: int) -> float:
    """Mean cross-entropy at the current params over holdout rows of class c."""
    if not 0 <= c < holdout.num_classes:
        raise InsufficientDataError(f"class {c} absent from holdout")
    rows = holdout.rows_for(c)
    loss, _ = loss_and_grad(params, holdout.inputs[rows], holdout.labels[rows])
    return loss


def unsupervised_risk_grad(
    params: ModelParams, holdout: LabeledPool, weights
) -> tuple[float, ModelParams]:
    """Weighted sum of class-wise risks and its exact gradient.

    risk = sum_c weights[c] * class_wise_risk(c).  Implemented as one weighted
    cross-entropy pass with per-sample weight ``weights[y_i] / n_{y_i}``, which
    matches the per-class decomposition exactly because the weights sum to 1.
    """
    weights = check_distribution(weights, "risk weights", atol=1e-6)
    if weights.size != holdout.num_classes:
        raise InsufficientDataError("risk weights and holdout disagree on classes")
    counts = holdout.class_counts().astype(np.float64)
    per_sample = weights[holdout.labels] / counts[holdout.labels]
    return loss_and_grad(params, holdout.inputs, holdout.labels, per_sample)
