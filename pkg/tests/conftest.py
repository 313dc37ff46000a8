import itertools

import numpy as np
import pytest

from shiftlab.data import DatasetSpec, make_gaussian_pool, split_pool
from shiftlab.model import ModelParams, pretrain


def finite_diff_grad(fn, params, step=1e-5):
    """Central-difference gradient of fn(params) -> float, ModelParams-shaped."""
    grad_w = np.zeros_like(params.weights)
    grad_b = np.zeros_like(params.biases)
    for idx in np.ndindex(*params.weights.shape):
        p_hi, p_lo = params.copy(), params.copy()
        p_hi.weights[idx] += step
        p_lo.weights[idx] -= step
        grad_w[idx] = (fn(p_hi) - fn(p_lo)) / (2 * step)
    for i in range(params.biases.size):
        p_hi, p_lo = params.copy(), params.copy()
        p_hi.biases[i] += step
        p_lo.biases[i] -= step
        grad_b[i] = (fn(p_hi) - fn(p_lo)) / (2 * step)
    return ModelParams(grad_w, grad_b)


def assert_grad_close(analytic, numeric, rtol=1e-4, floor=1e-8):
    """Elementwise relative comparison; tiny entries compared absolutely."""
    for a, n in ((analytic.weights, numeric.weights), (analytic.biases, numeric.biases)):
        diff = np.abs(a - n)
        scale = np.maximum(np.abs(n), floor)
        rel = diff / scale
        small = np.abs(n) < floor
        assert np.all(rel[~small] <= rtol), f"max rel err {rel[~small].max():g}"
        assert np.all(diff[small] <= rtol), f"max abs err {diff[small].max():g}"


def brute_force_simplex(v):
    """Exhaustive KKT check over all support sets (n <= ~12)."""
    v = np.asarray(v, dtype=float)
    n = v.size
    for size in range(n, 0, -1):
        for support in itertools.combinations(range(n), size):
            s = list(support)
            theta = (v[s].sum() - 1.0) / size
            x = np.zeros(n)
            x[s] = v[s] - theta
            if np.all(x[s] >= -1e-12):
                off = [i for i in range(n) if i not in support]
                if all(v[i] - theta <= 1e-12 for i in off):
                    return np.maximum(x, 0.0)
    raise AssertionError("no KKT point found")


@pytest.fixture(scope="session")
def tiny_setup():
    """Separable 3-class pool with a trained model, shared across tests."""
    spec = DatasetSpec(kind="synthetic", num_classes=3, dim=5, per_class=80, separation=6.0, seed=5)
    pool = make_gaussian_pool(spec)
    train, holdout = split_pool(pool, 0.25, seed=1)
    params = pretrain(train, epochs=15, lr=0.1, batch_size=32, seed=2)
    return train, holdout, params


@pytest.fixture(scope="session")
def overlap_setup():
    """Overlapping 4-class pool with a converged model (imperfect classifier)."""
    spec = DatasetSpec(kind="synthetic", num_classes=4, dim=6, per_class=120, separation=3.5, seed=9)
    pool = make_gaussian_pool(spec)
    train, holdout = split_pool(pool, 0.25, seed=3)
    params = pretrain(train, epochs=25, lr=0.2, batch_size=32, seed=4)
    return train, holdout, params
