"""Shift-aware learning-rate scheduling.

The shift estimate is the cosine distance between the previous and current
mean softmax outputs; it is mapped linearly onto a bounded learning-rate
range.  Stable predictions keep the rate at the lower bound, a complete
prediction swap drives it to the upper bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import cosine_distance
from .validation import check_distribution


@dataclass(frozen=True)
class LrBounds:
    """Learning-rate range [eta_min, eta_max], 0 < eta_min <= eta_max."""

    eta_min: float
    eta_max: float

    def __post_init__(self):
        if not (0.0 < self.eta_min <= self.eta_max):
            raise ValueError(
                f"bounds must satisfy 0 < eta_min <= eta_max, got ({self.eta_min}, {self.eta_max})"
            )


DEFAULT_BOUNDS = LrBounds(eta_min=5e-6, eta_max=1e-4)


def shift_estimate(prev, cur) -> float:
    """Cosine distance between consecutive prediction buffers, clamped to [0, 1].

    The clamp only absorbs floating-point undershoot/overshoot; for probability
    vectors the distance already lies in [0, 1].
    """
    prev = check_distribution(prev, "previous buffer")
    cur = check_distribution(cur, "current prediction")
    if prev.shape != cur.shape:
        raise ValueError("buffers disagree on length")
    return min(max(cosine_distance(prev, cur), 0.0), 1.0)


def learning_rate(e: float, bounds: LrBounds) -> float:
    """Map a shift estimate in [0, 1] linearly into [eta_min, eta_max]."""
    if not 0.0 <= e <= 1.0:
        raise ValueError(f"shift estimate must be in [0, 1], got {e}")
    eta = bounds.eta_min + e * (bounds.eta_max - bounds.eta_min)
    # clamp guards endpoint rounding so recorded rates never leave the bounds
    return min(max(eta, bounds.eta_min), bounds.eta_max)


def step(buffer, cur, bounds: LrBounds) -> tuple[float, np.ndarray, float]:
    """One scheduler step: estimate the shift, pick the rate, advance the buffer.

    Returns ``(eta, new_buffer, shift)`` where ``new_buffer`` holds ``cur``.
    """
    e = shift_estimate(buffer, cur)
    eta = learning_rate(e, bounds)
    return eta, np.array(cur, dtype=np.float64, copy=True), e
