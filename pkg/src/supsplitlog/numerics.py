"""Regularized Gram matrices with a maintained inverse and log-determinant.

A ``DesignState`` holds ``V = ridge * I + sum_i x_i x_i^T`` together with
``V^{-1}`` (kept current through Sherman-Morrison updates) and the running
value of ``log det V - log det(ridge * I)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, UsageError

# dense re-inversion period, bounds floating-point drift of the rank-one updates
REINVERT_EVERY = 256


@dataclass
class DesignState:
    dim: int
    ridge: float
    matrix: np.ndarray = field(repr=False)
    inverse: np.ndarray = field(repr=False)
    logdet_ratio: float = 0.0
    count: int = 0

    @classmethod
    def new(cls, dim: int, ridge: float) -> "DesignState":
        if int(dim) != dim or dim < 1:
            raise ConfigurationError(f"dim must be a positive integer, got {dim!r}")
        if not ridge > 0 or not math.isfinite(ridge):
            raise ConfigurationError(f"ridge must be positive and finite, got {ridge!r}")
        dim = int(dim)
        ridge = float(ridge)
        return cls(
            dim=dim,
            ridge=ridge,
            matrix=ridge * np.eye(dim),
            inverse=np.eye(dim) / ridge,
        )

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,) or x.ndim > 2:
            raise UsageError(f"expected vector(s) of length {self.dim}, got shape {x.shape}")
        return x

    def insert(self, x) -> "DesignState":
        """Add ``x x^T`` to the matrix in place; returns ``self``."""
        x = self._check(x)
        if x.ndim != 1:
            raise UsageError("insert takes a single vector")
        self.count += 1
        if not np.any(x):
            return self
        vx = self.inverse @ x
        q = float(x @ vx)
        self.matrix += np.outer(x, x)
        self.inverse -= np.outer(vx, vx) / (1.0 + q)
        self.logdet_ratio += math.log1p(max(q, 0.0))
        if self.count % REINVERT_EVERY == 0:
            self.reinvert()
        return self

    def reinvert(self) -> None:
        inv = np.linalg.inv(self.matrix)
        self.inverse = 0.5 * (inv + inv.T)

    def mahalanobis_sq(self, x):
        """``x^T V^{-1} x`` for one vector, or row-wise for a 2-D array."""
        x = self._check(x)
        if x.ndim == 1:
            return max(float(x @ self.inverse @ x), 0.0)
        vals = ((x @ self.inverse) * x).sum(axis=1)
        return np.maximum(vals, 0.0)

    def copy(self) -> "DesignState":
        return DesignState(
            dim=self.dim,
            ridge=self.ridge,
            matrix=self.matrix.copy(),
            inverse=self.inverse.copy(),
            logdet_ratio=self.logdet_ratio,
            count=self.count,
        )


def new_design(dim: int, ridge: float) -> DesignState:
    return DesignState.new(dim, ridge)


def insert(state: DesignState, x) -> DesignState:
    return state.insert(x)


def mahalanobis_sq(state: DesignState, x):
    return state.mahalanobis_sq(x)


def logdet_ratio(state: DesignState) -> float:
    return state.logdet_ratio


def dense_logdet_ratio(matrix: np.ndarray, ridge: float) -> float:
    """Log-det ratio from scratch via a symmetric eigendecomposition."""
    eig = np.linalg.eigvalsh(matrix)
    return float(np.sum(np.log(eig / ridge)))


def logdet_upper_bound(dim: int, n: int, ridge: float, norm_bound: float = 1.0) -> float:
    """``d log(1 + n L^2 / (d ridge))``, the worst case for ``n`` vectors of norm <= L."""
    return dim * math.log1p(n * norm_bound**2 / (dim * ridge))


def elliptical_potential(vectors, ridge: float) -> tuple[float, float]:
    """Return ``(sum_t min(1, ||x_t||^2_{V_{t-1}^{-1}}), logdet_ratio(V_n))``."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    state = DesignState.new(vectors.shape[1], ridge)
    total = 0.0
    for x in vectors:
        total += min(1.0, state.mahalanobis_sq(x))
        state.insert(x)
    return total, state.logdet_ratio
