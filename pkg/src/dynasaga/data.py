"""LIBSVM ingestion, synthetic generators and train/test splitting.

All randomness goes through ``numpy.random.Generator(PCG64(seed))`` so a
given seed produces bitwise-identical data on every platform numpy
supports.
"""

from __future__ import annotations

import io
import math
import os
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from dynasaga.errors import ParseError
from dynasaga.model import Dataset


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class SyntheticConfig:
    n: int
    d: int
    sigma_noise: float = 1.0
    min_eig: float = 1.0
    seed: int = 0
    w_star: Optional[tuple] = None

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive")
        if not 0 < self.min_eig <= 1:
            raise ValueError("min_eig must lie in (0, 1]")
        if self.sigma_noise < 0:
            raise ValueError("sigma_noise must be nonnegative")
        if self.w_star is not None and len(self.w_star) != self.d:
            raise ValueError("w_star length differs from d")
        if self.d > self.n:
            warnings.warn(f"d={self.d} exceeds n={self.n}; the sample Hessian is singular")


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")


def _open_text(source):
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("ascii"))
    if isinstance(source, str):
        return io.StringIO(source)
    if isinstance(source, os.PathLike):
        return open(source, "r", encoding="ascii")
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="ascii")


def parse_libsvm(source, mode: str = "classification", dimension: int | None = None) -> Dataset:
    """Parse ``label idx:val ...`` lines into a Dataset.

    ``source`` is a binary stream, a text stream, raw bytes/str content, or
    a ``pathlib.Path``. In classification mode labels are mapped to +-1:
    labels <= 0 become -1; if every label is positive, the larger of the
    two distinct values becomes -1 (covers the 1/2 encoding).
    """
    if mode not in ("classification", "regression"):
        raise ValueError(f"unknown mode {mode!r}")
    stream = _open_text(source)
    labels = []
    indptr = [0]
    indices = []
    values = []
    max_index = 0
    for lineno, line in enumerate(stream, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            labels.append(float(tokens[0]))
        except ValueError:
            raise ParseError(f"malformed label {tokens[0]!r}", lineno) from None
        prev = 0
        for tok in tokens[1:]:
            head, sep, tail = tok.partition(":")
            if not sep:
                raise ParseError(f"malformed feature token {tok!r}", lineno)
            try:
                j = int(head)
                v = float(tail)
            except ValueError:
                raise ParseError(f"malformed feature token {tok!r}", lineno) from None
            if j < 1:
                raise ParseError(f"feature index {j} < 1", lineno)
            if j <= prev:
                raise ParseError(f"feature index {j} not increasing", lineno)
            prev = j
            if not math.isfinite(v):
                raise ParseError(f"non-finite feature value {tail!r}", lineno)
            if v != 0.0:
                indices.append(j - 1)
                values.append(v)
        if len(indices) == indptr[-1]:
            raise ParseError("sample has no nonzero feature entries", lineno)
        indptr.append(len(indices))
        max_index = max(max_index, prev)
    y = np.asarray(labels, dtype=np.float64)
    if mode == "classification":
        y = map_binary_labels(y)
    dim = max_index if dimension is None else dimension
    if dim < max_index:
        raise ParseError(f"dimension {dim} smaller than max index {max_index}")
    X = sp.csr_matrix(
        (np.asarray(values, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
        shape=(len(labels), max(dim, 1)),
    )
    return Dataset(X, y)


def map_binary_labels(y: np.ndarray) -> np.ndarray:
    distinct = np.unique(y)
    if distinct.size and distinct[0] <= 0:
        return np.where(y <= 0, -1.0, 1.0)
    if distinct.size > 2:
        raise ParseError(f"more than two positive labels: {distinct[:5].tolist()}")
    if distinct.size == 2:
        return np.where(y == distinct[1], -1.0, 1.0)
    return np.ones_like(y)


def serialize_libsvm(data: Dataset, stream) -> None:
    """Write ``data`` in LIBSVM format with round-trip exact floats."""
    X = data.X
    for i in range(len(data)):
        s, e = X.indptr[i], X.indptr[i + 1]
        parts = [repr(float(data.y[i]))]
        parts += [f"{j + 1}:{float(v)!r}" for j, v in zip(X.indices[s:e], X.data[s:e])]
        stream.write(" ".join(parts) + "\n")


def diag_covariance(d: int, min_eig: float) -> np.ndarray:
    if d < 1:
        raise ValueError("d must be positive")
    if not 0 < min_eig <= 1:
        raise ValueError("min_eig must lie in (0, 1]")
    if d == 1:
        return np.ones(1)
    return np.linspace(1.0, min_eig, d)


def _features(cfg: SyntheticConfig, rng: np.random.Generator):
    cov = diag_covariance(cfg.d, cfg.min_eig)
    if cfg.w_star is None:
        w = rng.standard_normal(cfg.d)
        w /= np.linalg.norm(w)
    else:
        w = np.asarray(cfg.w_star, dtype=np.float64).copy()
    X = rng.standard_normal((cfg.n, cfg.d)) * np.sqrt(cov)
    return X, w


def generate_regression(cfg: SyntheticConfig):
    """Gaussian inputs with diagonal covariance and noisy linear targets."""
    rng = make_rng(cfg.seed)
    X, w = _features(cfg, rng)
    y = X @ w
    if cfg.sigma_noise > 0:
        y = y + cfg.sigma_noise * rng.standard_normal(cfg.n)
    return Dataset.from_dense(X, y), w


def generate_classification(cfg: SyntheticConfig, scale: float = 1.0, normalize_rows: bool = False):
    """Gaussian inputs with +-1 labels drawn from a logistic link on <x, w*>.

    ``sigma_noise`` is unused; label noise comes from the link itself. With
    ``normalize_rows`` the inputs are scaled to unit norm after the labels
    are drawn, as is customary for LIBSVM benchmark data.
    """
    rng = make_rng(cfg.seed)
    X, w = _features(cfg, rng)
    p = 1.0 / (1.0 + np.exp(-scale * (X @ w)))
    y = np.where(rng.random(cfg.n) < p, 1.0, -1.0)
    if normalize_rows:
        X = X / np.linalg.norm(X, axis=1, keepdims=True)
    return Dataset.from_dense(X, y), w


def split(data: Dataset, spec: SplitSpec):
    n = len(data)
    if n < 2:
        raise ValueError("need at least two samples to split")
    n_train = math.ceil(spec.train_fraction * n - 1e-9)
    if n_train <= 0 or n_train >= n:
        raise ValueError(f"split of {n} samples at {spec.train_fraction} leaves an empty side")
    order = make_rng(spec.seed).permutation(n)
    return data.take(order[:n_train]), data.take(order[n_train:])
