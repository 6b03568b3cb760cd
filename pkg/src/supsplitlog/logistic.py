"""Logistic link, the projected-gradient pilot fit, and the one-step Newton correction.

Sample sets are passed around as a feature matrix ``X`` of shape ``(n, d)``
and a reward vector ``r`` of shape ``(n,)``; ``samples_to_arrays`` converts a
list of :class:`Sample` records into that form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, UsageError


def mu(z):
    """Logistic function; accepts scalars or arrays."""
    out = expit(z)
    return float(out) if np.ndim(out) == 0 else out


def dmu(z):
    """Derivative of the logistic function, ``mu(z) * (1 - mu(z))``."""
    m = expit(z)
    out = m * (1.0 - m)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    r: int
    t: int = 0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 1:
            raise UsageError("sample features must be a vector")
        if self.r not in (0, 1):
            raise UsageError(f"reward must be 0 or 1, got {self.r!r}")
        if np.linalg.norm(x) > 1 + 1e-9:
            raise UsageError("sample features must have norm <= 1")
        object.__setattr__(self, "x", x)


def samples_to_arrays(samples: Sequence[Sample], dim: int) -> tuple[np.ndarray, np.ndarray]:
    if not samples:
        return np.zeros((0, dim)), np.zeros(0)
    X = np.stack([s.x for s in samples])
    if X.shape[1] != dim:
        raise UsageError(f"samples have dimension {X.shape[1]}, expected {dim}")
    return X, np.array([s.r for s in samples], dtype=float)


@dataclass(frozen=True)
class FitOptions:
    radius: float
    reg: float = 1.0
    steps: int = 20
    learning_rate: float = 0.3
    warm_start: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigurationError("steps must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if not self.radius > 0 or not self.reg > 0:
            raise ConfigurationError("radius and reg must be positive")


def _check(theta: np.ndarray, X: np.ndarray, r: np.ndarray):
    theta = np.asarray(theta, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        X = np.zeros((0, theta.shape[0]))
    if X.ndim != 2 or X.shape[1] != theta.shape[0]:
        raise UsageError(f"X must have shape (n, {theta.shape[0]}), got {X.shape}")
    r = np.asarray(r, dtype=float).reshape(-1)
    if X.shape[0] != r.shape[0]:
        raise UsageError("X and r have different numbers of rows")
    return theta, X, r


def project_ball(theta: np.ndarray, radius: float) -> np.ndarray:
    norm = float(np.linalg.norm(theta))
    if norm > radius:
        theta = theta * (radius / norm)
        # guard against rounding pushing the norm a hair above the radius
        if np.linalg.norm(theta) > radius:
            theta = theta * np.nextafter(1.0, 0.0)
    return theta


def regularized_loss(theta, X, r, reg: float) -> float:
    """Negative log-likelihood plus ``reg/2 * ||theta||^2``."""
    theta, X, r = _check(theta, X, r)
    z = X @ theta
    # -r log mu(z) - (1-r) log(1-mu(z)) = log(1+e^z) - r z
    return float(np.sum(np.logaddexp(0.0, z) - r * z) + 0.5 * reg * theta @ theta)


def fit_pilot(X, r, opts: FitOptions) -> np.ndarray:
    """Projected gradient descent on the regularized logistic loss over the ball.

    The step uses the gradient averaged over ``max(n, 1)`` samples, so a fixed
    learning rate stays stable as the sample set grows; the fixed point is the
    same constrained minimizer.
    """
    X = np.asarray(X, dtype=float)
    r = np.asarray(r, dtype=float)
    if X.ndim != 2:
        raise UsageError("X must be a 2-D array of shape (n, d)")
    dim = X.shape[1]
    if opts.warm_start is not None:
        theta = np.array(opts.warm_start, dtype=float)
    else:
        theta = np.zeros(dim)
    theta = project_ball(theta, opts.radius)
    step = opts.learning_rate / max(X.shape[0], 1)
    reg = opts.reg
    radius = opts.radius
    XT = X.T
    for _ in range(opts.steps):
        resid = expit(X @ theta)
        resid -= r
        theta = theta - step * (XT @ resid + reg * theta)
        # inline projection; the hot loop runs steps times per refit
        norm = math.sqrt(theta @ theta)
        if norm > radius:
            theta = project_ball(theta, radius)
    return theta


def level_gradient(theta, X, r, reg: float) -> np.ndarray:
    """``sum_i (r_i - mu(x_i^T theta)) x_i - reg * theta``."""
    theta, X, r = _check(theta, X, r)
    return X.T @ (r - expit(X @ theta)) - reg * theta


def level_hessian(theta, X, r, reg: float) -> np.ndarray:
    """``reg * I + sum_i mu'(x_i^T theta) x_i x_i^T``."""
    theta, X, r = _check(theta, X, r)
    w = dmu(X @ theta)
    H = (X.T * w) @ X
    H[np.diag_indices_from(H)] += reg
    return H


def one_step_correct(theta_bar, X, r, reg: float) -> np.ndarray:
    """Single Newton step from ``theta_bar`` on the sample set; not projected."""
    theta_bar, X, r = _check(theta_bar, X, r)
    g = level_gradient(theta_bar, X, r, reg)
    H = level_hessian(theta_bar, X, r, reg)
    return theta_bar + np.linalg.solve(H, g)
