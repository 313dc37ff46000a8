import math

import numpy as np
import pytest
from sklearn.base import clone

from shiftlab.data import DatasetSpec, make_gaussian_pool
from shiftlab.errors import DegenerateInputError
from shiftlab.model import (
    ModelParams,
    SoftmaxClassifier,
    accuracy,
    batch_prediction,
    forward,
    init_params,
    load_checkpoint,
    loss_and_grad,
    pretrain,
    save_checkpoint,
    softmax_probs,
)
from shiftlab.shift import StreamBatch

from conftest import assert_grad_close, finite_diff_grad


class TestForward:
    def test_zero_params_uniform(self):
        params = ModelParams(np.zeros((3, 4)), np.zeros(3))
        out = forward(params, np.array([1.0, -2.0, 0.5, 3.0]))
        assert np.allclose(out, [1 / 3] * 3, atol=1e-12)

    def test_bias_only(self):
        params = ModelParams(np.zeros((2, 3)), np.array([math.log(2.0), 0.0]))
        out = forward(params, np.zeros(3))
        assert np.allclose(out, [2 / 3, 1 / 3], atol=1e-12)

    def test_normalization_and_overflow(self):
        rng = np.random.default_rng(0)
        params = ModelParams(rng.normal(size=(5, 4)) * 200, rng.normal(size=5) * 200)
        X = rng.normal(size=(40, 4)) * 10
        probs = softmax_probs(params, X)
        assert np.all(np.isfinite(probs))
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(probs >= 0)

    def test_translation_invariance(self):
        rng = np.random.default_rng(1)
        params = ModelParams(rng.normal(size=(4, 3)), rng.normal(size=4))
        shifted = ModelParams(params.weights.copy(), params.biases + 7.5)
        x = rng.normal(size=3)
        assert np.allclose(forward(params, x), forward(shifted, x), atol=1e-12)

    def test_dim_mismatch(self):
        params = ModelParams(np.zeros((2, 3)), np.zeros(2))
        with pytest.raises(ValueError):
            forward(params, np.zeros(4))


class TestBatchPrediction:
    def test_identical_inputs(self):
        rng = np.random.default_rng(2)
        params = ModelParams(rng.normal(size=(3, 2)), rng.normal(size=3))
        x = rng.normal(size=2)
        batch = StreamBatch(np.tile(x, (5, 1)), np.zeros(5, dtype=int), timestep=1)
        assert np.allclose(batch_prediction(params, batch), forward(params, x), atol=1e-12)

    def test_mean_of_extremes(self):
        params = ModelParams(np.array([[40.0], [-40.0]]), np.zeros(2))
        batch = np.array([[1.0], [-1.0]])
        assert np.allclose(batch_prediction(params, batch), [0.5, 0.5], atol=1e-12)

    def test_on_simplex(self):
        rng = np.random.default_rng(3)
        params = ModelParams(rng.normal(size=(4, 3)), rng.normal(size=4))
        out = batch_prediction(params, rng.normal(size=(17, 3)))
        assert out.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(out >= 0)


class TestLossAndGrad:
    def test_confident_correct_predictions(self):
        # margin >= 20 between true logit and the rest
        params = ModelParams(np.eye(3) * 25.0, np.zeros(3))
        X = np.eye(3)
        loss, _ = loss_and_grad(params, X, np.array([0, 1, 2]))
        assert loss <= 1e-6

    def test_uniform_prediction_ln_c(self):
        for c in (2, 5, 9):
            params = ModelParams(np.zeros((c, 3)), np.zeros(c))
            X = np.random.default_rng(4).normal(size=(11, 3))
            y = np.arange(11) % c
            loss, _ = loss_and_grad(params, X, y)
            assert loss == pytest.approx(math.log(c), abs=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        for trial in range(5):
            c, d, n = rng.integers(2, 5), rng.integers(2, 6), rng.integers(3, 9)
            params = ModelParams(rng.normal(size=(c, d)), rng.normal(size=c))
            X = rng.normal(size=(n, d))
            y = rng.integers(0, c, size=n)
            w = rng.uniform(0.1, 2.0, size=n)
            _, grad = loss_and_grad(params, X, y, w)
            numeric = finite_diff_grad(lambda p: loss_and_grad(p, X, y, w)[0], params)
            assert_grad_close(grad, numeric)

    def test_uniform_weights_equal_unweighted(self):
        rng = np.random.default_rng(6)
        params = ModelParams(rng.normal(size=(3, 4)), rng.normal(size=3))
        X = rng.normal(size=(9, 4))
        y = rng.integers(0, 3, size=9)
        loss_a, grad_a = loss_and_grad(params, X, y)
        loss_b, grad_b = loss_and_grad(params, X, y, np.ones(9))
        assert loss_a == loss_b
        assert np.array_equal(grad_a.weights, grad_b.weights)
        assert np.array_equal(grad_a.biases, grad_b.biases)

    def test_all_zero_weights_rejected(self):
        params = ModelParams(np.zeros((2, 2)), np.zeros(2))
        with pytest.raises(DegenerateInputError):
            loss_and_grad(params, np.zeros((2, 2)), np.array([0, 1]), np.zeros(2))

    def test_negative_weights_rejected(self):
        params = ModelParams(np.zeros((2, 2)), np.zeros(2))
        with pytest.raises(ValueError):
            loss_and_grad(params, np.zeros((2, 2)), np.array([0, 1]), np.array([1.0, -1.0]))


class TestPretrain:
    def test_learns_separable_pool(self):
        pool = make_gaussian_pool(DatasetSpec(num_classes=3, dim=4, per_class=100, separation=6.0, seed=8))
        params = pretrain(pool, epochs=30, lr=0.1, batch_size=32, seed=1)
        assert accuracy(params, pool.inputs, pool.labels) >= 0.95

    def test_zero_epochs_is_init(self):
        pool = make_gaussian_pool(DatasetSpec(num_classes=3, dim=4, per_class=10, separation=6.0, seed=8))
        params = pretrain(pool, epochs=0, lr=0.1, batch_size=32, seed=42)
        init = init_params(3, 4, seed=42)
        assert np.array_equal(params.weights, init.weights)
        assert np.array_equal(params.biases, init.biases)

    def test_deterministic(self):
        pool = make_gaussian_pool(DatasetSpec(num_classes=3, dim=4, per_class=40, separation=6.0, seed=8))
        a = pretrain(pool, epochs=5, lr=0.05, batch_size=16, seed=3)
        b = pretrain(pool, epochs=5, lr=0.05, batch_size=16, seed=3)
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.biases, b.biases)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(9)
        params = ModelParams(rng.normal(size=(4, 7)) * 1e-3, rng.normal(size=4))
        path = tmp_path / "ckpt.json"
        save_checkpoint(params, path, seed=17)
        loaded, meta = load_checkpoint(path)
        assert np.array_equal(loaded.weights, params.weights)
        assert np.array_equal(loaded.biases, params.biases)
        assert meta["seed"] == 17
        save_checkpoint(loaded, tmp_path / "ckpt2.json", seed=17)
        assert (tmp_path / "ckpt.json").read_bytes() == (tmp_path / "ckpt2.json").read_bytes()

    def test_rejects_unknown_format(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "other", "num_classes": 1, "dim": 1, "weights": [0], "biases": [0]}')
        with pytest.raises(ValueError):
            load_checkpoint(path)


class TestSoftmaxClassifier:
    def test_fit_predict(self, tiny_setup):
        train, holdout, _ = tiny_setup
        clf = SoftmaxClassifier(epochs=15, lr=0.1, batch_size=32, seed=0)
        clf.fit(train.inputs, train.labels)
        assert clf.score(holdout.inputs, holdout.labels) >= 0.95
        probs = clf.predict_proba(holdout.inputs)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_sklearn_clone_and_params(self):
        clf = SoftmaxClassifier(epochs=3, lr=0.2, batch_size=8, seed=5)
        twin = clone(clf)
        assert twin.get_params() == clf.get_params()
