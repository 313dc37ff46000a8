"""Small dense-algebra core: ridge-regularized inversion, simplex projection,
cosine distance.

Everything here is a pure function on immutable inputs and safe to call from
concurrent workers.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInputError, SingularMatrixError
from .validation import as_float_array, check_square


def invert_ridge(m, ridge: float = 0.0) -> np.ndarray:
    """Return ``(m + ridge * I)^{-1}``.

    Parameters
    ----------
    m : array_like, shape (n, n)
        Square matrix.
    ridge : float
        Non-negative diagonal regularizer; guards against near-singular
        empirical matrices.

    Raises
    ------
    SingularMatrixError
        If ``m + ridge * I`` is exactly singular (only possible when the
        ridge does not lift the rank, e.g. ``ridge == 0``).
    """
    m = check_square(m, "matrix")
    if ridge < 0:
        raise ValueError(f"ridge must be non-negative, got {ridge}")
    n = m.shape[0]
    a = m + ridge * np.eye(n) if ridge else m
    try:
        return np.linalg.solve(a, np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"matrix is singular with ridge={ridge}") from exc


def default_ridge(m) -> float:
    """Scale-aware ridge floor: ``1e-6 * trace(m) / n``."""
    m = check_square(m, "matrix")
    return 1e-6 * float(np.trace(m)) / m.shape[0]


def project_simplex(v) -> np.ndarray:
    """Euclidean projection of ``v`` onto the probability simplex.

    Sort-based exact algorithm, O(n log n).  Points already on the simplex
    are returned unchanged (up to the additive zero shift).
    """
    v = as_float_array(v, "vector", ndim=1)
    u = np.sort(v)[::-1]
    cumsum = np.cumsum(u)
    ranks = np.arange(1, v.size + 1)
    support = np.nonzero(u * ranks > cumsum - 1.0)[0]
    # index 0 always satisfies the support condition exactly; it can only be
    # lost to float cancellation when entries dwarf the unit mass
    rho = int(support[-1]) if support.size else 0
    theta = (cumsum[rho] - 1.0) / (rho + 1)
    out = np.maximum(v - theta, 0.0)
    total = out.sum()
    if not np.isfinite(total) or abs(total - 1.0) > 1e-9:
        # entries dwarf the unit mass and cancellation broke the shift;
        # the projection limit for such inputs is the argmax corner
        out = np.zeros_like(v)
        out[int(np.argmax(v))] = 1.0
    return out


def cosine_distance(a, b) -> float:
    """``1 - <a, b> / (||a|| * ||b||)``; lies in [0, 1] for non-negative inputs."""
    a = as_float_array(a, "a", ndim=1)
    b = as_float_array(b, "b", ndim=1)
    if a.shape != b.shape:
        raise ValueError(f"vectors disagree on length: {a.size} vs {b.size}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise DegenerateInputError("cosine distance is undefined for zero-norm vectors")
    return 1.0 - float(np.dot(a, b)) / (norm_a * norm_b)
