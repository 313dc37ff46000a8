import numpy as np
import pytest

from shiftlab.data import (
    DatasetSpec,
    LabeledPool,
    class_means,
    encode_idx,
    load_idx_pool,
    make_gaussian_pool,
    make_pool,
    parse_idx,
    split_pool,
)
from shiftlab.errors import IdxFormatError, InsufficientDataError


class TestGaussianPool:
    def test_shapes_and_counts(self):
        spec = DatasetSpec(num_classes=3, dim=2, per_class=100, separation=6.0, seed=1)
        pool = make_gaussian_pool(spec)
        assert len(pool) == 300
        assert pool.dim == 2
        assert list(pool.class_counts()) == [100, 100, 100]

    def test_deterministic(self):
        spec = DatasetSpec(num_classes=4, dim=3, per_class=50, separation=5.0, seed=9)
        a, b = make_gaussian_pool(spec), make_gaussian_pool(spec)
        assert np.array_equal(a.inputs, b.inputs)
        assert np.array_equal(a.labels, b.labels)

    def test_mean_separation(self):
        for C, D in ((5, 10), (7, 3), (12, 4)):
            spec = DatasetSpec(num_classes=C, dim=D, per_class=2, separation=4.0, seed=2)
            means = class_means(spec)
            for i in range(C):
                for j in range(i + 1, C):
                    assert np.linalg.norm(means[i] - means[j]) >= 4.0 - 1e-9

    def test_nearest_mean_oracle(self):
        # estimate means on one half, classify the held-out half
        spec = DatasetSpec(num_classes=5, dim=10, per_class=500, separation=8.0, seed=7)
        pool = make_gaussian_pool(spec)
        train, holdout = split_pool(pool, 0.5, seed=0)
        means = np.stack([train.inputs[train.rows_for(c)].mean(axis=0) for c in range(5)])
        dists = ((holdout.inputs[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        acc = np.mean(dists.argmin(axis=1) == holdout.labels)
        assert acc >= 0.99

    def test_pool_immutable(self):
        spec = DatasetSpec(num_classes=2, dim=2, per_class=5, separation=4.0, seed=0)
        pool = make_gaussian_pool(spec)
        with pytest.raises(ValueError):
            pool.inputs[0, 0] = 7.0

    def test_missing_class_rejected(self):
        with pytest.raises(InsufficientDataError):
            LabeledPool(np.zeros((3, 2)), np.array([0, 0, 2]))


class TestSplitPool:
    def test_fraction(self):
        spec = DatasetSpec(num_classes=3, dim=2, per_class=100, separation=5.0, seed=3)
        pool = make_gaussian_pool(spec)
        train, holdout = split_pool(pool, 0.2, seed=1)
        assert list(holdout.class_counts()) == [20, 20, 20]
        assert list(train.class_counts()) == [80, 80, 80]

    def test_deterministic(self):
        spec = DatasetSpec(num_classes=3, dim=2, per_class=30, separation=5.0, seed=3)
        pool = make_gaussian_pool(spec)
        a = split_pool(pool, 0.3, seed=11)
        b = split_pool(pool, 0.3, seed=11)
        assert np.array_equal(a[0].inputs, b[0].inputs)
        assert np.array_equal(a[1].inputs, b[1].inputs)

    def test_minimum_one_per_side(self):
        pool = LabeledPool(np.arange(12, dtype=float).reshape(6, 2), np.array([0, 0, 1, 1, 2, 2]))
        train, holdout = split_pool(pool, 0.5, seed=0)
        assert list(holdout.class_counts()) == [1, 1, 1]
        assert list(train.class_counts()) == [1, 1, 1]

    def test_reconstitutes_pool(self):
        spec = DatasetSpec(num_classes=4, dim=3, per_class=25, separation=5.0, seed=13)
        pool = make_gaussian_pool(spec)
        train, holdout = split_pool(pool, 0.25, seed=2)
        merged = np.vstack([train.inputs, holdout.inputs])
        original = pool.inputs
        order_m = np.lexsort(merged.T)
        order_o = np.lexsort(original.T)
        assert np.allclose(merged[order_m], original[order_o])

    def test_too_small_class(self):
        pool = LabeledPool(np.zeros((3, 2)) + np.arange(3)[:, None], np.array([0, 1, 1]))
        with pytest.raises(InsufficientDataError):
            split_pool(pool, 0.5, seed=0)


class TestIdx:
    def test_vector_example(self):
        data = bytes([0, 0, 8, 1, 0, 0, 0, 2, 7, 2])
        out = parse_idx(data)
        assert out.shape == (2,)
        assert list(out) == [7, 2]

    def test_tensor_example(self):
        data = bytes([0, 0, 8, 3]) + (2).to_bytes(4, "big") + (1).to_bytes(4, "big") + (1).to_bytes(4, "big") + bytes([5, 9])
        out = parse_idx(data)
        assert out.shape == (2, 1, 1)
        assert out[0, 0, 0] == 5 and out[1, 0, 0] == 9

    def test_truncated_payload_offset(self):
        data = bytes([0, 0, 8, 1, 0, 0, 0, 4, 1, 2, 3])  # declares 4, provides 3
        with pytest.raises(IdxFormatError) as err:
            parse_idx(data)
        assert err.value.offset == len(data)

    def test_bad_magic(self):
        with pytest.raises(IdxFormatError) as err:
            parse_idx(bytes([1, 0, 8, 1, 0, 0, 0, 0]))
        assert err.value.offset == 0

    def test_bad_type_code(self):
        with pytest.raises(IdxFormatError) as err:
            parse_idx(bytes([0, 0, 9, 1, 0, 0, 0, 0]))
        assert err.value.offset == 2

    def test_trailing_bytes(self):
        data = bytes([0, 0, 8, 1, 0, 0, 0, 1, 5, 6])
        with pytest.raises(IdxFormatError):
            parse_idx(data)

    def test_round_trip(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            shape = tuple(rng.integers(1, 5, size=rng.integers(1, 4)))
            tensor = rng.integers(0, 256, size=shape).astype(np.uint8)
            data = encode_idx(tensor)
            back = parse_idx(data)
            assert np.array_equal(back, tensor)
            assert encode_idx(back) == data

    def test_load_idx_pool_scaling(self, tmp_path):
        rng = np.random.default_rng(8)
        images = rng.integers(0, 256, size=(10, 3, 3)).astype(np.uint8)
        labels = np.array([0, 1, 0, 1, 0, 1, 0, 1, 0, 1], dtype=np.uint8)
        (tmp_path / "img.idx").write_bytes(encode_idx(images))
        (tmp_path / "lab.idx").write_bytes(encode_idx(labels))
        pool = load_idx_pool(tmp_path / "img.idx", tmp_path / "lab.idx")
        assert pool.dim == 9
        assert pool.inputs.max() <= 1.0 and pool.inputs.min() >= 0.0
        assert np.allclose(pool.inputs[0], images[0].reshape(-1) / 255.0)

    def test_make_pool_dispatch(self, tmp_path):
        images = np.zeros((4, 2, 2), dtype=np.uint8)
        labels = np.array([0, 1, 0, 1], dtype=np.uint8)
        (tmp_path / "img.idx").write_bytes(encode_idx(images))
        (tmp_path / "lab.idx").write_bytes(encode_idx(labels))
        spec = DatasetSpec(
            kind="idx-files",
            num_classes=2,
            paths={"images": str(tmp_path / "img.idx"), "labels": str(tmp_path / "lab.idx")},
        )
        pool = make_pool(spec)
        assert len(pool) == 4 and pool.num_classes == 2
