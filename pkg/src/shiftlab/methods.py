"""Online adaptation methods sharing a predict-then-update protocol.

Every adapter is a scikit-learn style estimator:

* ``__init__`` takes the pretrained model plus hyperparameters,
* ``fit(X, y)`` binds the labeled holdout (confusion matrix, class-wise risk
  data, prediction buffer),
* ``predict_proba(X)`` / ``predict(X)`` give the current adapted predictions,
* ``partial_fit(X)`` consumes one unlabeled batch,
* ``step(X)`` returns the pre-update predictions and then updates, sharing
  the forward pass; the stream runners time exactly this call.

Methods: ``asap`` (shift-aware adaptive rate), ``uogd`` (constant-rate
unbiased updates), ``atlas`` (rate-grid ensemble with multiplicative meta
weights), ``fth`` / ``ftfwh`` (prediction reweighting by historical label
distribution estimates, full or windowed).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, fields as dataclass_fields

import numpy as np
from sklearn.base import BaseEstimator

from . import asap as asap_mod
from .asap import DEFAULT_BOUNDS, LrBounds
from .data import LabeledPool
from .estimator import conditional_from_joint, estimate_confusion, unsupervised_risk_grad
from .linalg import default_ridge, invert_ridge, project_simplex
from .model import ModelParams, softmax_probs
from .validation import check_distribution

METHOD_KINDS = ("asap", "uogd", "atlas", "fth", "ftfwh")
DEFAULT_ETA_GRID = (1e-6, 5e-6, 1e-5, 5e-5, 1e-4)


@dataclass
class StepRecord:
    """Per-timestep evaluation record.

    ``accuracy`` is measured on the batch before any update that uses it;
    ``wall_nanos`` covers the method's own predict+update work only.
    """

    t: int
    accuracy: float
    eta: float | None
    shift_e: float | None
    estimated_dist: np.ndarray | None
    wall_nanos: int


def resolve_params(model) -> ModelParams:
    """Accept a ModelParams or a fitted SoftmaxClassifier-like object."""
    if isinstance(model, ModelParams):
        return model
    params = getattr(model, "params_", None)
    if isinstance(params, ModelParams):
        return params
    raise ValueError("model must be a ModelParams or a fitted classifier with params_")


def reweight_predictions(probs, hist, train_prior) -> np.ndarray:
    """Posterior reweighting ``p_c * hist_c / prior_c``, renormalized.

    Accepts a single probability vector or a (n, C) matrix of rows.  Rows
    whose reweighted mass underflows to zero fall back to ``hist``.
    """
    hist = check_distribution(hist, "history distribution")
    prior = check_distribution(train_prior, "training prior")
    if np.any(prior <= 0):
        raise ValueError("training prior must be strictly positive")
    p = np.asarray(probs, dtype=np.float64)
    single = p.ndim == 1
    rows = p[np.newaxis, :] if single else p
    if rows.shape[1] != hist.size:
        raise ValueError("predictions and history disagree on the number of classes")
    out = rows * (hist / prior)
    mass = out.sum(axis=1, keepdims=True)
    dead = mass[:, 0] == 0.0
    if np.any(dead):
        out[dead] = hist
        mass = out.sum(axis=1, keepdims=True)
    out = out / mass
    return out[0] if single else out


class OnlineAdapter(BaseEstimator):
    """Shared machinery for the online methods (not used directly)."""

    model = None
    ridge = None

    def fit(self, X, y):
        """Bind the labeled holdout: confusion matrix, risk data, priors."""
        params0 = resolve_params(self.model)
        self.holdout_ = LabeledPool(np.asarray(X, dtype=np.float64), np.asarray(y))
        if self.holdout_.num_classes != params0.num_classes:
            raise ValueError("holdout and model disagree on the number of classes")
        self.params_ = params0.copy()
        self.n_classes_ = params0.num_classes
        self.confusion_ = estimate_confusion(params0, self.holdout_)
        conditional = conditional_from_joint(self.confusion_)
        ridge = self.ridge if self.ridge is not None else default_ridge(conditional)
        self.inv_confusion_ = invert_ridge(conditional, ridge)
        self.prior_ = self.holdout_.class_distribution()
        self.last_eta_ = None
        self.last_shift_ = None
        self.last_estimate_ = None
        self._post_fit()
        return self

    def _post_fit(self):
        pass

    def predict_proba(self, X):
        return softmax_probs(self.params_, np.asarray(X, dtype=np.float64))

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def step(self, X) -> np.ndarray:
        """Predict the batch, then update from it; returns the pre-update probs."""
        X = np.asarray(X, dtype=np.float64)
        probs = self.predict_proba(X)
        self._update(X, probs)
        return probs

    def partial_fit(self, X):
        self.step(X)
        return self

    def _update(self, X, probs):
        raise NotImplementedError

    # -- shared update pieces ------------------------------------------------

    def _bbse_estimate(self, probs) -> np.ndarray:
        """Label-distribution estimate from argmax pseudo-labels of ``probs``."""
        preds = probs.argmax(axis=1)
        pseudo = np.bincount(preds, minlength=self.n_classes_).astype(np.float64)
        pseudo /= pseudo.sum()
        return project_simplex(self.inv_confusion_ @ pseudo)

    def _risk_update(self, params: ModelParams, weights, eta: float) -> float:
        risk, grad = unsupervised_risk_grad(params, self.holdout_, weights)
        params.weights -= eta * grad.weights
        params.biases -= eta * grad.biases
        return risk


class AsapAdapter(OnlineAdapter):
    """Adaptive-rate adapter: cosine shift estimate between consecutive mean
    predictions, mapped linearly into [eta_min, eta_max]."""

    def __init__(
        self,
        model=None,
        eta_min: float = DEFAULT_BOUNDS.eta_min,
        eta_max: float = DEFAULT_BOUNDS.eta_max,
        ridge: float | None = None,
        buffer_size: int = 64,
        seed: int = 0,
    ):
        self.model = model
        self.eta_min = eta_min
        self.eta_max = eta_max
        self.ridge = ridge
        self.buffer_size = buffer_size
        self.seed = seed

    def _post_fit(self):
        self.bounds_ = LrBounds(self.eta_min, self.eta_max)
        # seed the prediction buffer with one holdout batch of stream size
        rng = np.random.default_rng([self.seed, 0xB0])
        rows = rng.integers(0, len(self.holdout_), size=self.buffer_size)
        self.buffer_ = softmax_probs(self.params_, self.holdout_.inputs[rows]).mean(axis=0)

    def _update(self, X, probs):
        current = probs.mean(axis=0)
        eta, self.buffer_, shift = asap_mod.step(self.buffer_, current, self.bounds_)
        weights = self._bbse_estimate(probs)
        self._risk_update(self.params_, weights, eta)
        self.last_eta_ = eta
        self.last_shift_ = shift
        self.last_estimate_ = weights


class UogdAdapter(OnlineAdapter):
    """Constant-rate unbiased updates on the estimated-risk gradient."""

    def __init__(self, model=None, eta: float = 5e-6, ridge: float | None = None):
        self.model = model
        self.eta = eta
        self.ridge = ridge

    def _post_fit(self):
        if self.eta < 0:
            raise ValueError("eta must be non-negative")

    def _update(self, X, probs):
        weights = self._bbse_estimate(probs)
        self._risk_update(self.params_, weights, self.eta)
        self.last_eta_ = self.eta
        self.last_estimate_ = weights


class AtlasLiteAdapter(OnlineAdapter):
    """Rate-grid ensemble: one learner per eta, multiplicative meta weights
    driven by each learner's estimated risk; predictions are the meta-weighted
    mean of learner outputs."""

    def __init__(
        self,
        model=None,
        eta_grid: tuple = DEFAULT_ETA_GRID,
        meta_rate: float = 1.0,
        ridge: float | None = None,
    ):
        self.model = model
        self.eta_grid = eta_grid
        self.meta_rate = meta_rate
        self.ridge = ridge

    def _post_fit(self):
        grid = tuple(float(e) for e in self.eta_grid)
        if not grid or any(e <= 0 for e in grid):
            raise ValueError("eta_grid must be non-empty with positive rates")
        if self.meta_rate <= 0:
            raise ValueError("meta_rate must be positive")
        self.grid_ = grid
        self.learner_params_ = [self.params_.copy() for _ in grid]
        self.meta_weights_ = np.full(len(grid), 1.0 / len(grid))

    def _learner_probs(self, X):
        return [softmax_probs(p, X) for p in self.learner_params_]

    def _blend(self, per_learner):
        out = self.meta_weights_[0] * per_learner[0]
        for w, probs in zip(self.meta_weights_[1:], per_learner[1:]):
            out = out + w * probs
        return out

    def predict_proba(self, X):
        return self._blend(self._learner_probs(np.asarray(X, dtype=np.float64)))

    def step(self, X):
        X = np.asarray(X, dtype=np.float64)
        per_learner = self._learner_probs(X)
        out = self._blend(per_learner)
        self._update_learners(per_learner)
        return out

    def _update(self, X, probs):  # pragma: no cover - step() bypasses this
        self._update_learners(self._learner_probs(X))

    def _update_learners(self, per_learner):
        estimates = [self._bbse_estimate(probs) for probs in per_learner]
        pre_meta = self.meta_weights_.copy()
        risks = np.empty(len(self.grid_))
        grads = []
        for k, (params, est) in enumerate(zip(self.learner_params_, estimates)):
            risk, grad = unsupervised_risk_grad(params, self.holdout_, est)
            risks[k] = risk
            grads.append(grad)
        weights = self.meta_weights_ * np.exp(-self.meta_rate * risks)
        total = weights.sum()
        if not np.isfinite(total) or total <= 0.0:
            weights = np.full(len(self.grid_), 1.0 / len(self.grid_))
            total = 1.0
        self.meta_weights_ = weights / total
        for eta, params, grad in zip(self.grid_, self.learner_params_, grads):
            params.weights -= eta * grad.weights
            params.biases -= eta * grad.biases
        self.last_estimate_ = sum(w * est for w, est in zip(pre_meta, estimates))


class FthAdapter(OnlineAdapter):
    """Historical-averaging reweighter: tracks the running mean of per-batch
    label-distribution estimates and reweights the frozen model's outputs.
    Model parameters are never updated."""

    def __init__(self, model=None, ridge: float | None = None):
        self.model = model
        self.ridge = ridge

    def _post_fit(self):
        self.history_ = []

    def _window(self):
        return self.history_

    def _history_mean(self):
        window = self._window()
        if not window:
            return self.prior_
        return np.mean(window, axis=0)

    def predict_proba(self, X):
        raw = softmax_probs(self.params_, np.asarray(X, dtype=np.float64))
        return reweight_predictions(raw, self._history_mean(), self.prior_)

    def step(self, X):
        X = np.asarray(X, dtype=np.float64)
        raw = softmax_probs(self.params_, X)
        out = reweight_predictions(raw, self._history_mean(), self.prior_)
        estimate = self._bbse_estimate(raw)
        self.history_.append(estimate)
        self.last_estimate_ = estimate
        return out

    def _update(self, X, probs):  # pragma: no cover - step() bypasses this
        raw = softmax_probs(self.params_, X)
        self.history_.append(self._bbse_estimate(raw))


class FtfwhAdapter(FthAdapter):
    """Windowed variant of the historical reweighter (last ``window`` steps)."""

    def __init__(self, model=None, window: int = 10, ridge: float | None = None):
        self.model = model
        self.window = window
        self.ridge = ridge

    def _post_fit(self):
        if self.window < 1:
            raise ValueError("window must be at least 1")
        self.history_ = []

    def _window(self):
        return self.history_[-self.window :]


@dataclass
class MethodConfig:
    """Declarative method selection for the harness; kind-specific fields only."""

    kind: str
    name: str | None = None
    eta_min: float | None = None
    eta_max: float | None = None
    eta: float | None = None
    eta_grid: tuple | None = None
    meta_rate: float | None = None
    window: int | None = None
    ridge: float | None = None

    _ALLOWED = {
        "asap": {"eta_min", "eta_max"},
        "uogd": {"eta"},
        "atlas": {"eta_grid", "meta_rate"},
        "fth": set(),
        "ftfwh": {"window"},
    }

    def __post_init__(self):
        self.kind = str(self.kind).strip().lower()
        if self.kind not in METHOD_KINDS:
            raise ValueError(f"unknown method kind {self.kind!r}; expected one of {METHOD_KINDS}")
        allowed = self._ALLOWED[self.kind] | {"ridge"}
        for f in dataclass_fields(self):
            if f.name in ("kind", "name"):
                continue
            if getattr(self, f.name) is not None and f.name not in allowed:
                raise ValueError(f"field {f.name!r} does not apply to method {self.kind!r}")
        if self.kind == "asap":
            if self.eta_min is None:
                self.eta_min = DEFAULT_BOUNDS.eta_min
            if self.eta_max is None:
                self.eta_max = DEFAULT_BOUNDS.eta_max
            LrBounds(self.eta_min, self.eta_max)
        elif self.kind == "uogd":
            if self.eta is None:
                raise ValueError("uogd requires eta")
            if self.eta < 0:
                raise ValueError("eta must be non-negative")
        elif self.kind == "atlas":
            if self.eta_grid is None:
                self.eta_grid = DEFAULT_ETA_GRID
            self.eta_grid = tuple(float(e) for e in self.eta_grid)
            if not self.eta_grid or any(e <= 0 for e in self.eta_grid):
                raise ValueError("eta_grid must be non-empty with positive rates")
            if self.meta_rate is None:
                self.meta_rate = 1.0
            if self.meta_rate <= 0:
                raise ValueError("meta_rate must be positive")
        elif self.kind == "ftfwh":
            if self.window is None:
                raise ValueError("ftfwh requires window")
            if self.window < 1:
                raise ValueError("window must be at least 1")

    @property
    def label(self) -> str:
        return self.name if self.name else self.kind

    def build(self, model, batch_size: int = 64, seed: int = 0) -> OnlineAdapter:
        """Construct the adapter for a pretrained model (unfitted; call fit)."""
        if self.kind == "asap":
            return AsapAdapter(
                model=model,
                eta_min=self.eta_min,
                eta_max=self.eta_max,
                ridge=self.ridge,
                buffer_size=batch_size,
                seed=seed,
            )
        if self.kind == "uogd":
            return UogdAdapter(model=model, eta=self.eta, ridge=self.ridge)
        if self.kind == "atlas":
            return AtlasLiteAdapter(
                model=model, eta_grid=self.eta_grid, meta_rate=self.meta_rate, ridge=self.ridge
            )
        if self.kind == "fth":
            return FthAdapter(model=model, ridge=self.ridge)
        return FtfwhAdapter(model=model, window=self.window, ridge=self.ridge)


def run_adapter(adapter: OnlineAdapter, holdout: LabeledPool, stream) -> list[StepRecord]:
    """Drive one adapter over a stream with the predict-then-update protocol.

    Accuracy at step t is measured against the hidden labels using the
    predictions emitted before the step-t update; the timed region is the
    adapter's own ``step`` call.
    """
    adapter.fit(holdout.inputs, holdout.labels)
    records = []
    for batch in stream:
        tic = time.perf_counter_ns()
        probs = adapter.step(batch.inputs)
        wall = time.perf_counter_ns() - tic
        acc = float(np.mean(probs.argmax(axis=1) == batch.true_labels))
        records.append(
            StepRecord(
                t=batch.timestep,
                accuracy=acc,
                eta=adapter.last_eta_,
                shift_e=adapter.last_shift_,
                estimated_dist=adapter.last_estimate_,
                wall_nanos=int(wall),
            )
        )
    return records


def run_asap(
    params,
    holdout: LabeledPool,
    stream,
    bounds: LrBounds = DEFAULT_BOUNDS,
    ridge: float | None = None,
    buffer_seed: int = 0,
) -> list[StepRecord]:
    adapter = AsapAdapter(
        model=resolve_params(params),
        eta_min=bounds.eta_min,
        eta_max=bounds.eta_max,
        ridge=ridge,
        buffer_size=getattr(stream, "batch_size", 64),
        seed=buffer_seed,
    )
    return run_adapter(adapter, holdout, stream)


def run_uogd(params, holdout: LabeledPool, stream, eta: float, ridge: float | None = None):
    adapter = UogdAdapter(model=resolve_params(params), eta=eta, ridge=ridge)
    return run_adapter(adapter, holdout, stream)


def run_atlas_lite(
    params,
    holdout: LabeledPool,
    stream,
    eta_grid=DEFAULT_ETA_GRID,
    meta_rate: float = 1.0,
    ridge: float | None = None,
):
    adapter = AtlasLiteAdapter(
        model=resolve_params(params), eta_grid=eta_grid, meta_rate=meta_rate, ridge=ridge
    )
    return run_adapter(adapter, holdout, stream)


def run_fth(params, holdout: LabeledPool, stream, ridge: float | None = None):
    adapter = FthAdapter(model=resolve_params(params), ridge=ridge)
    return run_adapter(adapter, holdout, stream)


def run_ftfwh(params, holdout: LabeledPool, stream, window: int, ridge: float | None = None):
    adapter = FtfwhAdapter(model=resolve_params(params), window=window, ridge=ridge)
    return run_adapter(adapter, holdout, stream)
