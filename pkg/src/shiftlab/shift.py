"""Time-varying label distributions and conditional batch sampling.

The class prior at step t is a convex mix of two endpoint distributions,
``(1 - alpha(t)) * p0 + alpha(t) * pT``, with four alpha patterns:

* ``lin``: t / T
* ``sin``: |sin(pi * t / sqrt(T))| (rectified so alpha stays in [0, 1])
* ``squ``: toggles between 0 and 1 every ceil(sqrt(T)/2) steps, starting at 0
* ``ber``: two-state process starting at 0, flipping with probability
  1/sqrt(T) per step (seeded)

Batches are sampled with replacement from a labeled pool so the
class-conditional input distribution stays fixed while the prior moves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledPool
from .validation import check_distribution

SHIFT_KINDS = ("lin", "sin", "squ", "ber")


def normalize_kind(kind: str) -> str:
    k = str(kind).strip().lower()
    if k not in SHIFT_KINDS:
        raise ValueError(f"unknown shift kind {kind!r}; expected one of {SHIFT_KINDS}")
    return k


def default_endpoints(num_classes: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform start, one-hot target on a seeded random class."""
    if num_classes < 2:
        raise ValueError("num_classes must be at least 2")
    rng = np.random.default_rng(seed)
    p0 = np.full(num_classes, 1.0 / num_classes)
    pT = np.zeros(num_classes)
    pT[int(rng.integers(num_classes))] = 1.0
    return p0, pT


def interpolate(p0, pT, a: float) -> np.ndarray:
    """Convex mix ``(1 - a) * p0 + a * pT``."""
    p0 = check_distribution(p0, "p0")
    pT = check_distribution(pT, "pT")
    if p0.shape != pT.shape:
        raise ValueError(f"endpoint lengths disagree: {p0.size} vs {pT.size}")
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"mixing coefficient must be in [0, 1], got {a}")
    return (1.0 - a) * p0 + a * pT


@dataclass(frozen=True)
class StreamBatch:
    """One timestep of unlabeled inputs; true labels ride along for evaluation only."""

    inputs: np.ndarray
    true_labels: np.ndarray
    timestep: int

    def __post_init__(self):
        if len(self.inputs) != len(self.true_labels) or len(self.inputs) < 1:
            raise ValueError("batch needs matching, non-empty inputs and labels")

    def __len__(self) -> int:
        return len(self.inputs)


@dataclass
class ShiftSchedule:
    """Shift pattern + horizon + endpoint distributions."""

    kind: str
    horizon: int
    p0: np.ndarray
    pT: np.ndarray
    seed: int = 0  # used by the ber state process only
    _ber_states: np.ndarray = field(init=False, repr=False, default=None)

    def __post_init__(self):
        self.kind = normalize_kind(self.kind)
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        self.p0 = check_distribution(self.p0, "p0")
        self.pT = check_distribution(self.pT, "pT")
        if self.p0.shape != self.pT.shape:
            raise ValueError("p0 and pT must have the same length")
        if self.kind == "ber":
            rng = np.random.default_rng([self.seed, 0xBE])
            flip_prob = 1.0 / math.sqrt(self.horizon)
            states = np.zeros(self.horizon + 1)
            state = 0.0
            for t in range(1, self.horizon + 1):
                if rng.random() < flip_prob:
                    state = 1.0 - state
                states[t] = state
            self._ber_states = states

    @property
    def num_classes(self) -> int:
        return self.p0.size

    def alpha(self, t: int) -> float:
        """Degree of shift at step t, always in [0, 1]."""
        if not 0 <= t <= self.horizon:
            raise ValueError(f"t must be in [0, {self.horizon}], got {t}")
        root = math.sqrt(self.horizon)
        if self.kind == "lin":
            return t / self.horizon
        if self.kind == "sin":
            return abs(math.sin(math.pi * t / root))
        if self.kind == "squ":
            block = math.ceil(root / 2.0)
            return float((t // block) % 2)
        return float(self._ber_states[t])

    def distribution_at(self, t: int) -> np.ndarray:
        return interpolate(self.p0, self.pT, self.alpha(t))


def sample_batch(pool: LabeledPool, p, batch_size: int, seed: int, t: int) -> StreamBatch:
    """Draw a batch with labels ~ p and inputs resampled from the pool's class rows.

    Deterministic given (seed, t); batches can therefore be regenerated in any
    order.
    """
    p = check_distribution(p, "label distribution")
    if p.size != pool.num_classes:
        raise ValueError(f"distribution covers {p.size} classes, pool has {pool.num_classes}")
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    rng = np.random.default_rng([seed, t])
    labels = rng.choice(p.size, size=batch_size, p=p)
    rows = np.empty(batch_size, dtype=np.int64)
    for c in range(p.size):
        mask = labels == c
        k = int(mask.sum())
        if k == 0:
            continue
        class_rows = pool.rows_for(c)
        rows[mask] = class_rows[rng.integers(0, class_rows.size, size=k)]
    return StreamBatch(inputs=pool.inputs[rows], true_labels=labels.astype(np.int64), timestep=t)


@dataclass
class LabelShiftStream:
    """A reproducible stream of unlabeled batches governed by a shift schedule."""

    pool: LabeledPool
    schedule: ShiftSchedule
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.pool.num_classes != self.schedule.num_classes:
            raise ValueError("pool and schedule disagree on the number of classes")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")

    def __len__(self) -> int:
        return self.schedule.horizon

    def distribution_at(self, t: int) -> np.ndarray:
        return self.schedule.distribution_at(t)

    def batch(self, t: int) -> StreamBatch:
        if not 1 <= t <= self.schedule.horizon:
            raise ValueError(f"t must be in [1, {self.schedule.horizon}], got {t}")
        return sample_batch(self.pool, self.distribution_at(t), self.batch_size, self.seed, t)

    def __iter__(self):
        for t in range(1, self.schedule.horizon + 1):
            yield self.batch(t)
