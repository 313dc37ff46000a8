import numpy as np
import pytest

from shiftlab.errors import DegenerateInputError, SingularMatrixError
from shiftlab.linalg import cosine_distance, default_ridge, invert_ridge, project_simplex

from conftest import brute_force_simplex


class TestInvertRidge:
    def test_identity(self):
        out = invert_ridge(np.eye(3), 0.0)
        assert np.allclose(out, np.eye(3), atol=1e-12)

    def test_diagonal(self):
        out = invert_ridge(np.diag([2.0, 4.0]), 0.0)
        assert np.allclose(out, np.diag([0.5, 0.25]), atol=1e-12)

    def test_ridge_lifts_singular(self):
        m = np.ones((2, 2))
        out = invert_ridge(m, 1e-3)
        residual = (m + 1e-3 * np.eye(2)) @ out - np.eye(2)
        assert np.abs(residual).max() <= 1e-8
        assert np.all(np.isfinite(out))

    def test_singular_without_ridge(self):
        with pytest.raises(SingularMatrixError):
            invert_ridge(np.ones((2, 2)), 0.0)

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            invert_ridge(np.ones((2, 3)))

    def test_negative_ridge_rejected(self):
        with pytest.raises(ValueError):
            invert_ridge(np.eye(2), -1.0)

    def test_residual_well_conditioned(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            m = rng.normal(size=(6, 6)) + 6 * np.eye(6)
            out = invert_ridge(m, 0.0)
            assert np.abs(m @ out - np.eye(6)).max() <= 1e-8

    def test_default_ridge_scale(self):
        m = np.diag([2.0, 4.0])
        assert default_ridge(m) == pytest.approx(1e-6 * 6.0 / 2)


class TestProjectSimplex:
    def test_already_on_simplex(self):
        v = np.array([0.3, 0.7])
        assert np.allclose(project_simplex(v), v, atol=1e-12)

    def test_uniform_excess(self):
        assert np.allclose(project_simplex([0.8, 0.8]), [0.5, 0.5], atol=1e-12)

    def test_clips_negative(self):
        assert np.allclose(project_simplex([1.5, -0.5]), [1.0, 0.0], atol=1e-12)

    def test_matches_kkt_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            v = rng.uniform(-2, 2, size=rng.integers(2, 8))
            assert np.allclose(project_simplex(v), brute_force_simplex(v), atol=1e-9)

    def test_huge_entries_collapse_to_corner(self):
        out = project_simplex([1e18, 3e17, 0.0])
        assert np.allclose(out, [1.0, 0.0, 0.0])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            project_simplex([])


class TestCosineDistance:
    def test_identical(self):
        assert cosine_distance([0.5, 0.5], [0.5, 0.5]) == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_onehots(self):
        assert cosine_distance([1, 0], [0, 1]) == pytest.approx(1.0)

    def test_known_value(self):
        assert cosine_distance([1, 0], [0.5, 0.5]) == pytest.approx(1 - 0.5 / np.sqrt(0.5), abs=1e-9)

    def test_zero_norm_rejected(self):
        with pytest.raises(DegenerateInputError):
            cosine_distance([0.0, 0.0], [1.0, 0.0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cosine_distance([1.0], [1.0, 0.0])
