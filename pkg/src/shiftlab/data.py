"""Labeled data pools: synthetic Gaussian clusters and IDX (MNIST-style) ingestion.

A pool is an immutable set of feature rows with class labels, indexed by class
so streams can sample conditionally.  IDX features are scaled to [0, 1]
(divide by 255); synthetic features are left unscaled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IdxFormatError, InsufficientDataError
from .validation import as_float_array, check_labels, check_matching_rows

IDX_UBYTE_TYPE = 0x08


@dataclass(frozen=True)
class LabeledPool:
    """Immutable labeled dataset with a per-class row index."""

    inputs: np.ndarray  # (n, dim) float64
    labels: np.ndarray  # (n,) int64
    class_index: tuple = field(init=False, repr=False)

    def __post_init__(self):
        inputs = as_float_array(self.inputs, "inputs", ndim=2).copy()
        labels = np.asarray(self.labels)
        check_matching_rows(inputs, labels)
        num_classes = int(labels.max()) + 1 if labels.size else 0
        labels = check_labels(labels, num_classes).copy()
        index = tuple(np.flatnonzero(labels == c) for c in range(num_classes))
        for c, rows in enumerate(index):
            if rows.size == 0:
                raise InsufficientDataError(f"class {c} has no members")
            rows.setflags(write=False)
        inputs.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_index", index)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def num_classes(self) -> int:
        return len(self.class_index)

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def rows_for(self, c: int) -> np.ndarray:
        return self.class_index[c]

    def class_counts(self) -> np.ndarray:
        return np.array([rows.size for rows in self.class_index], dtype=np.int64)

    def class_distribution(self) -> np.ndarray:
        counts = self.class_counts()
        return counts / counts.sum()


@dataclass
class DatasetSpec:
    """Where a pool comes from: a synthetic draw or a pair of IDX files."""

    kind: str = "synthetic"
    num_classes: int = 10
    dim: int = 20
    per_class: int = 500
    separation: float = 6.0
    seed: int = 0
    paths: dict | None = None  # {"images": ..., "labels": ...} for kind="idx-files"

    def validate(self) -> None:
        if self.kind not in ("synthetic", "idx-files"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if self.per_class < 1:
            raise ValueError("per_class must be at least 1")
        if self.kind == "synthetic":
            if self.dim < 1:
                raise ValueError("dim must be positive")
            if self.separation <= 0:
                raise ValueError("separation must be positive")
        else:
            if not self.paths or "images" not in self.paths or "labels" not in self.paths:
                raise ValueError("idx-files dataset needs paths = {'images': ..., 'labels': ...}")

    @property
    def label(self) -> str:
        """Short identifier used in output file names (no underscores)."""
        if self.kind == "synthetic":
            return f"synth{self.num_classes}x{self.dim}"
        return "idx"


def _random_rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-ish random orthogonal matrix via QR with sign fixing."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def class_means(spec: DatasetSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Deterministic class-mean layout for a synthetic spec.

    Means sit on scaled coordinate axes rotated by a seeded random orthogonal
    matrix.  For num_classes <= dim each mean is ``separation/sqrt(2)`` along
    its own axis, so pairwise distances equal ``separation`` exactly; extra
    classes wrap onto the axes at alternating signs and growing radii, which
    keeps all pairwise distances >= separation.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    rotation = _random_rotation(spec.dim, rng)
    scale = spec.separation / math.sqrt(2.0)
    means = np.zeros((spec.num_classes, spec.dim))
    for c in range(spec.num_classes):
        layer, axis = divmod(c, spec.dim)
        means[c, axis] = scale * (1 + layer) * (-1.0) ** layer
    return means @ rotation.T


def make_gaussian_pool(spec: DatasetSpec) -> LabeledPool:
    """Draw ``per_class`` unit-variance isotropic Gaussian samples per class."""
    spec.validate()
    if spec.kind != "synthetic":
        raise ValueError("make_gaussian_pool requires a synthetic spec")
    rng = np.random.default_rng(spec.seed)
    means = class_means(spec, rng)
    blocks = []
    labels = []
    for c in range(spec.num_classes):
        noise = rng.standard_normal((spec.per_class, spec.dim))
        blocks.append(means[c] + noise)
        labels.append(np.full(spec.per_class, c, dtype=np.int64))
    return LabeledPool(np.vstack(blocks), np.concatenate(labels))


def split_pool(pool: LabeledPool, holdout_fraction: float, seed: int) -> tuple[LabeledPool, LabeledPool]:
    """Stratified split into (train, holdout).

    Each class contributes ``round(n_c * holdout_fraction)`` rows to the
    holdout, clamped so both sides keep at least one row per class.
    """
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError("holdout_fraction must be in (0, 1)")
    counts = pool.class_counts()
    if counts.min() < 2:
        raise InsufficientDataError("every class needs at least 2 members to split")
    rng = np.random.default_rng(seed)
    train_rows, holdout_rows = [], []
    for c in range(pool.num_classes):
        rows = pool.rows_for(c)
        perm = rows[rng.permutation(rows.size)]
        take = int(rows.size * holdout_fraction + 0.5)
        take = min(max(take, 1), rows.size - 1)
        holdout_rows.append(perm[:take])
        train_rows.append(perm[take:])
    train_rows = np.concatenate(train_rows)
    holdout_rows = np.concatenate(holdout_rows)
    return (
        LabeledPool(pool.inputs[train_rows], pool.labels[train_rows]),
        LabeledPool(pool.inputs[holdout_rows], pool.labels[holdout_rows]),
    )


def parse_idx(data: bytes) -> np.ndarray:
    """Parse an IDX byte stream (unsigned-byte payload) into an ndarray.

    Layout: two zero bytes, a type code (0x08 = ubyte), the dimension count,
    then one big-endian uint32 per dimension, then the row-major payload.
    Errors report the byte offset at which parsing failed.
    """
    if len(data) < 4:
        raise IdxFormatError("header needs at least 4 bytes", offset=len(data))
    if data[0] != 0 or data[1] != 0:
        raise IdxFormatError(f"bad magic bytes {data[0]:#04x} {data[1]:#04x}", offset=0)
    if data[2] != IDX_UBYTE_TYPE:
        raise IdxFormatError(f"unsupported type code {data[2]:#04x}", offset=2)
    ndims = data[3]
    if ndims == 0:
        raise IdxFormatError("dimension count must be positive", offset=3)
    header_end = 4 + 4 * ndims
    if len(data) < header_end:
        raise IdxFormatError("truncated dimension list", offset=len(data))
    dims = [int.from_bytes(data[4 + 4 * i : 8 + 4 * i], "big") for i in range(ndims)]
    expected_end = header_end + int(np.prod(dims, dtype=np.int64))
    if len(data) < expected_end:
        raise IdxFormatError(
            f"truncated payload: expected {expected_end - header_end} bytes", offset=len(data)
        )
    if len(data) > expected_end:
        raise IdxFormatError("trailing bytes after payload", offset=expected_end)
    payload = np.frombuffer(data, dtype=np.uint8, offset=header_end)
    return payload.reshape(dims)


def encode_idx(tensor: np.ndarray) -> bytes:
    """Serialize a uint8 ndarray back to IDX bytes (inverse of parse_idx)."""
    tensor = np.asarray(tensor)
    if tensor.dtype != np.uint8:
        raise ValueError("IDX ubyte encoding requires a uint8 tensor")
    if tensor.ndim == 0 or tensor.ndim > 255:
        raise ValueError("tensor rank must be in [1, 255]")
    header = bytes([0, 0, IDX_UBYTE_TYPE, tensor.ndim])
    dims = b"".join(int(d).to_bytes(4, "big") for d in tensor.shape)
    return header + dims + tensor.tobytes(order="C")


def load_idx_pool(images_path: str, labels_path: str) -> LabeledPool:
    """Build a pool from an IDX image file (3-D) and label file (1-D).

    Images are flattened to feature vectors and scaled into [0, 1].
    """
    with open(images_path, "rb") as fh:
        images = parse_idx(fh.read())
    with open(labels_path, "rb") as fh:
        labels = parse_idx(fh.read())
    if images.ndim != 3:
        raise ValueError(f"image file must be 3-D, got {images.ndim}-D")
    if labels.ndim != 1:
        raise ValueError(f"label file must be 1-D, got {labels.ndim}-D")
    check_matching_rows(images, labels, "images", "labels")
    flat = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return LabeledPool(flat, labels.astype(np.int64))


def make_pool(spec: DatasetSpec) -> LabeledPool:
    """Materialize a pool from a spec (dispatch on kind)."""
    spec.validate()
    if spec.kind == "synthetic":
        return make_gaussian_pool(spec)
    return load_idx_pool(spec.paths["images"], spec.paths["labels"])
