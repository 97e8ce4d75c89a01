"""Loss families, data containers and problem constants for ERM.

Features are stored as a CSR matrix with 0-based columns; the public
``Sample`` view uses the 1-based indices of the LIBSVM convention.
Both loss families are linear models, so a per-sample gradient is
``c * a + lam * w`` where ``c`` is a scalar derivative of the data term.
The optimizers rely on this to store one scalar per sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from dynasaga.errors import DimensionMismatchError, NotStronglyConvexError

LEAST_SQUARES = "least-squares"
LOGISTIC = "logistic-l2"
LOSS_KINDS = (LEAST_SQUARES, LOGISTIC)

# dense copies are kept for small problems; row access is then a plain view
_DENSE_MAX_CELLS = 4_000_000
_DENSE_MAX_DIM = 512


@dataclass(frozen=True)
class Sample:
    indices: tuple  # 1-based, strictly increasing
    values: tuple
    label: float

    def __post_init__(self):
        if len(self.indices) == 0:
            raise ValueError("a sample needs at least one feature entry")
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values differ in length")
        prev = 0
        for j, v in zip(self.indices, self.values):
            if j <= prev:
                raise ValueError("feature indices must be strictly increasing and >= 1")
            if v == 0:
                raise ValueError("stored feature values must be nonzero")
            prev = j

    def dense(self, dimension: int) -> np.ndarray:
        out = np.zeros(dimension)
        out[np.asarray(self.indices) - 1] = self.values
        return out


class Dataset:
    """Immutable, ordered collection of samples.

    The prefix of length ``m`` is the active sub-sample used by the
    growing-sample optimizers, so the order never changes after
    construction.
    """

    def __init__(self, X, y, dimension=None):
        X = sp.csr_matrix(X, dtype=np.float64, copy=True)
        X.eliminate_zeros()
        X.sort_indices()
        y = np.asarray(y, dtype=np.float64).copy()
        if X.shape[0] != y.shape[0]:
            raise ValueError("feature rows and labels differ in length")
        if dimension is not None:
            if dimension < X.shape[1]:
                raise ValueError("dimension smaller than the largest feature index")
            if dimension > X.shape[1]:
                X = sp.csr_matrix((X.data, X.indices, X.indptr), shape=(X.shape[0], dimension))
        if X.shape[1] < 1:
            raise ValueError("dimension must be positive")
        for arr in (X.data, X.indices, X.indptr, y):
            arr.flags.writeable = False
        self.X = X
        self.y = y
        self.dimension = X.shape[1]
        self._dense = None
        if X.shape[1] <= _DENSE_MAX_DIM and X.shape[0] * X.shape[1] <= _DENSE_MAX_CELLS:
            dense = X.toarray()
            dense.flags.writeable = False
            self._dense = dense
        self._sq_norms = None

    @classmethod
    def from_samples(cls, samples: Sequence[Sample], dimension=None):
        indptr = [0]
        indices = []
        data = []
        labels = []
        max_index = 0
        for s in samples:
            indices.extend(j - 1 for j in s.indices)
            data.extend(s.values)
            indptr.append(len(indices))
            labels.append(s.label)
            max_index = max(max_index, s.indices[-1])
        dim = max_index if dimension is None else dimension
        if dim < max_index:
            raise ValueError("dimension smaller than the largest feature index")
        X = sp.csr_matrix(
            (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
            shape=(len(labels), dim),
        )
        return cls(X, labels)

    @classmethod
    def from_dense(cls, X, y):
        return cls(sp.csr_matrix(np.asarray(X, dtype=np.float64)), y)

    def __len__(self):
        return self.X.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.dimension == other.dimension
            and len(self) == len(other)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.X.indptr, other.X.indptr)
            and np.array_equal(self.X.indices, other.X.indices)
            and np.array_equal(self.X.data, other.X.data)
        )

    __hash__ = None

    def sample(self, i: int) -> Sample:
        s, e = self.X.indptr[i], self.X.indptr[i + 1]
        return Sample(
            tuple(int(j) + 1 for j in self.X.indices[s:e]),
            tuple(float(v) for v in self.X.data[s:e]),
            float(self.y[i]),
        )

    def samples(self) -> Iterable[Sample]:
        return (self.sample(i) for i in range(len(self)))

    def row(self, i: int):
        """Return ``(idx, values)`` usable as ``w[idx]`` for the i-th sample (0-based)."""
        if self._dense is not None:
            return slice(None), self._dense[i]
        s, e = self.X.indptr[i], self.X.indptr[i + 1]
        return self.X.indices[s:e], self.X.data[s:e]

    def take(self, order) -> "Dataset":
        order = np.asarray(order, dtype=np.int64)
        return Dataset(self.X[order], self.y[order], dimension=self.dimension)

    def prefix(self, m: int) -> "Dataset":
        return Dataset(self.X[:m], self.y[:m], dimension=self.dimension)

    @property
    def sq_norms(self) -> np.ndarray:
        if self._sq_norms is None:
            self._sq_norms = np.asarray(self.X.multiply(self.X).sum(axis=1)).ravel()
        return self._sq_norms

    def matvec(self, w, m=None):
        if self._dense is not None:
            A = self._dense if m is None else self._dense[:m]
            return A @ w
        A = self.X if m is None else self.X[:m]
        return A @ w

    def rmatvec(self, c, m=None):
        m = len(c) if m is None else m
        if self._dense is not None:
            return self._dense[:m].T @ c[:m]
        return self.X[:m].T @ c[:m]


@dataclass(frozen=True)
class LossModel:
    kind: str = LOGISTIC
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")

    def derivative(self, z: float, y: float) -> float:
        """d/dz of the data term at margin ``z``."""
        if self.kind == LEAST_SQUARES:
            return 2.0 * (z - y)
        yz = y * z
        # -y * sigmoid(-y z), written to avoid overflow
        if yz >= 0:
            e = math.exp(-yz)
            return -y * e / (1.0 + e)
        return -y / (1.0 + math.exp(yz))

    def derivatives(self, z: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.kind == LEAST_SQUARES:
            return 2.0 * (z - y)
        return -y * _sigmoid(-y * z)

    def data_losses(self, z: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.kind == LEAST_SQUARES:
            return (z - y) ** 2
        return np.logaddexp(0.0, -y * z)

    def second_derivatives(self, z: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.kind == LEAST_SQUARES:
            return np.full_like(z, 2.0)
        s = _sigmoid(y * z)
        return s * (1.0 - s)

    def regularizer(self, w) -> float:
        return 0.5 * self.lam * float(w @ w) if self.lam else 0.0


@dataclass(frozen=True)
class ProblemConstants:
    L: float
    mu: float
    kappa: float = field(init=False)

    def __post_init__(self):
        if not self.mu > 0:
            raise NotStronglyConvexError(f"strong convexity constant must be positive, got {self.mu}")
        if self.L < self.mu:
            raise ValueError(f"L={self.L} smaller than mu={self.mu}")
        object.__setattr__(self, "kappa", self.L / self.mu)


def _sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _check(w, s: Sample):
    if s.indices[-1] > len(w):
        raise DimensionMismatchError(
            f"sample index {s.indices[-1]} exceeds weight dimension {len(w)}"
        )
    return np.asarray(s.indices) - 1, np.asarray(s.values, dtype=np.float64)


def _check_prefix(data: Dataset, w, m):
    if not 1 <= m <= len(data):
        raise ValueError(f"prefix size {m} outside [1, {len(data)}]")
    if len(w) != data.dimension:
        raise DimensionMismatchError(f"weight dimension {len(w)} != data dimension {data.dimension}")


def loss_value(model: LossModel, w, s: Sample) -> float:
    idx, val = _check(w, s)
    z = float(val @ np.asarray(w)[idx])
    return float(model.data_losses(np.array([z]), np.array([s.label]))[0]) + model.regularizer(w)


def loss_gradient(model: LossModel, w, s: Sample) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    idx, val = _check(w, s)
    c = model.derivative(float(val @ w[idx]), s.label)
    g = model.lam * w if model.lam else np.zeros_like(w)
    g[idx] += c * val
    return g


def empirical_risk(model: LossModel, w, data: Dataset, m: int | None = None) -> float:
    m = len(data) if m is None else m
    w = np.asarray(w, dtype=np.float64)
    _check_prefix(data, w, m)
    z = data.matvec(w, m)
    return float(np.mean(model.data_losses(z, data.y[:m]))) + model.regularizer(w)


def full_gradient(model: LossModel, w, data: Dataset, m: int | None = None) -> np.ndarray:
    m = len(data) if m is None else m
    w = np.asarray(w, dtype=np.float64)
    _check_prefix(data, w, m)
    c = model.derivatives(data.matvec(w, m), data.y[:m])
    g = np.asarray(data.rmatvec(c, m)).ravel() / m
    if model.lam:
        g = g + model.lam * w
    return g


def hessian_vector(model: LossModel, w, v, data: Dataset, m: int | None = None) -> np.ndarray:
    m = len(data) if m is None else m
    h = model.second_derivatives(data.matvec(w, m), data.y[:m])
    out = np.asarray(data.rmatvec(h * data.matvec(v, m), m)).ravel() / m
    return out + model.lam * v


def constants(model: LossModel, data: Dataset, m: int | None = None, covariance=None) -> ProblemConstants:
    """Smoothness and strong convexity of the empirical risk on the first m samples.

    ``covariance`` (the diagonal of a known input covariance) replaces the
    data-dependent estimates for least squares: L and mu are then twice the
    extreme eigenvalues, matching the un-halved squared loss.
    """
    m = len(data) if m is None else m
    if not 1 <= m <= len(data):
        raise ValueError(f"prefix size {m} outside [1, {len(data)}]")
    if model.kind == LOGISTIC:
        if model.lam <= 0:
            raise NotStronglyConvexError("logistic loss needs lambda > 0 for strong convexity")
        return ProblemConstants(0.25 * float(data.sq_norms[:m].max()) + model.lam, model.lam)
    if covariance is not None:
        cov = np.asarray(covariance, dtype=np.float64)
        return ProblemConstants(2.0 * float(cov.max()) + model.lam, 2.0 * float(cov.min()) + model.lam)
    L = 2.0 * float(data.sq_norms[:m].max()) + model.lam
    mu = smallest_hessian_eigenvalue(data, m) + model.lam
    if mu <= 1e-12 * L:
        raise NotStronglyConvexError(f"least-squares Hessian is singular on the first {m} samples")
    return ProblemConstants(L, mu)


def smallest_hessian_eigenvalue(data: Dataset, m: int) -> float:
    """Smallest eigenvalue of (2/m) A^T A over the prefix."""
    d = data.dimension
    if m < d:
        return 0.0
    A = data.X[:m]
    if d <= 2000:
        H = (A.T @ A).toarray() * (2.0 / m)
        return float(np.linalg.eigvalsh(H)[0])
    from scipy.sparse.linalg import eigsh

    H = (A.T @ A) * (2.0 / m)
    return float(eigsh(H, k=1, which="SA", return_eigenvectors=False)[0])
