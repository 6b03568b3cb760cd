"""Synthetic logistic-bandit instances with low-rank context geometry."""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, UsageError
from .logistic import dmu, mu
from .numerics import REINVERT_EVERY
from .policy import ProblemConfig


class Regime(str, enum.Enum):
    LOW = "low"
    MIDDLE = "middle"
    HIGH = "high"


# (subspace rank, lowest norm, highest norm); rank None means the full dimension
REGIMES = {
    Regime.LOW: (2, 0.0, 0.05),
    Regime.MIDDLE: (10, 0.3, 0.5),
    Regime.HIGH: (None, 0.8, 1.0),
}

MAX_RETRIES = 20


def streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent (instance, reward, policy) generators derived from one seed."""
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.default_rng(c) for c in children)


def kappa_logit_limit(kappa: float) -> float:
    """Largest ``|z|`` with ``mu'(z) >= 1/kappa``."""
    if kappa < 4:
        raise ConfigurationError("kappa must be >= 4; mu' never exceeds 1/4")
    m = 0.5 * (1.0 + math.sqrt(max(1.0 - 4.0 / kappa, 0.0)))
    if m >= 1.0:
        return math.inf
    return math.log(m / (1.0 - m))


@dataclass(frozen=True)
class EnvironmentInstance:
    theta_star: np.ndarray
    contexts: np.ndarray = field(repr=False)
    basis: np.ndarray = field(repr=False)
    regime: Regime
    effective_rank: int
    norm_range: tuple[float, float]
    realized_kappa: float
    seed: int
    config: ProblemConfig
    axis_aligned: bool = False
    logits: np.ndarray = field(repr=False, default=None)
    means: np.ndarray = field(repr=False, default=None)
    best_arm: np.ndarray = field(repr=False, default=None)

    @property
    def T(self) -> int:
        return self.contexts.shape[0]

    @property
    def K(self) -> int:
        return self.contexts.shape[1]

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.theta_star, self.basis, self.contexts):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def generate_instance(
    cfg: ProblemConfig, regime: Regime | str, seed: int, axis_aligned: bool = False
) -> EnvironmentInstance:
    regime = Regime(regime)
    rank, lo, hi = REGIMES[regime]
    d, T, K = cfg.d, cfg.T, cfg.K
    r = d if rank is None else min(rank, d)
    z_max = kappa_logit_limit(cfg.kappa)
    rng = streams(seed)[0]

    if axis_aligned:
        basis = np.eye(d)[:, :r]
    else:
        basis, _ = np.linalg.qr(rng.standard_normal((d, r)))

    theta = rng.standard_normal(d)
    theta *= cfg.B / np.linalg.norm(theta)

    def draw(n: int) -> np.ndarray:
        dirs = rng.standard_normal((n, r))
        lengths = np.linalg.norm(dirs, axis=1, keepdims=True)
        lengths[lengths == 0] = 1.0
        norms = rng.uniform(lo, hi, size=(n, 1))
        return (dirs / lengths * norms) @ basis.T

    ctx = draw(T * K)
    bad = np.abs(ctx @ theta) > z_max
    for _ in range(MAX_RETRIES):
        if not bad.any():
            break
        ctx[bad] = draw(int(bad.sum()))
        bad = np.abs(ctx @ theta) > z_max
    if bad.any():
        z = ctx[bad] @ theta
        ctx[bad] *= (z_max / np.abs(z) * (1 - 1e-12))[:, None]
    ctx = ctx.reshape(T, K, d)

    logits = ctx @ theta
    realized = float(np.max(1.0 / dmu(logits)))
    if realized > cfg.kappa * (1 + 1e-12):
        raise ConfigurationError("generator could not satisfy the curvature constraint")
    means = mu(logits)
    return EnvironmentInstance(
        theta_star=_frozen(theta),
        contexts=_frozen(ctx),
        basis=_frozen(basis),
        regime=regime,
        effective_rank=r,
        norm_range=(lo, hi),
        realized_kappa=realized,
        seed=int(seed),
        config=cfg,
        axis_aligned=axis_aligned,
        logits=_frozen(logits),
        means=_frozen(np.atleast_2d(means)),
        best_arm=_frozen(np.argmax(logits, axis=1)),
    )


def _check_index(env: EnvironmentInstance, t: int, a: int) -> None:
    if not (0 <= t < env.T and 0 <= a < env.K):
        raise UsageError(f"round {t} / arm {a} out of range for T={env.T}, K={env.K}")


def sample_reward(env: EnvironmentInstance, t: int, a: int, rng: np.random.Generator) -> int:
    _check_index(env, t, a)
    return int(rng.random() < env.means[t, a])


def instant_regret(env: EnvironmentInstance, t: int, a: int) -> float:
    _check_index(env, t, a)
    best = env.best_arm[t]
    return max(float(env.means[t, best] - env.means[t, a]), 0.0)


def all_arms_logdet(env: EnvironmentInstance, ridge: float) -> np.ndarray:
    """Per-round log-det ratio of ``ridge*I + sum over rounds and all K arms of x x^T``."""
    d, K = env.config.d, env.K
    matrix = ridge * np.eye(d)
    inverse = np.eye(d) / ridge
    total = 0.0
    out = np.empty(env.T)
    for t in range(env.T):
        X = env.contexts[t]
        # block Woodbury step: det(V + X^T X) = det(V) det(I + X V^{-1} X^T)
        VX = inverse @ X.T
        M = np.eye(K) + X @ VX
        _, ld = np.linalg.slogdet(M)
        total += ld
        matrix += X.T @ X
        inverse -= VX @ np.linalg.solve(M, VX.T)
        if (t + 1) % REINVERT_EVERY == 0:
            inv = np.linalg.inv(matrix)
            inverse = 0.5 * (inv + inv.T)
        out[t] = total
    return out


def export_instance(env: EnvironmentInstance) -> dict:
    cfg = env.config
    return {
        "d": cfg.d,
        "T": cfg.T,
        "K": cfg.K,
        "B": cfg.B,
        "kappa": cfg.kappa,
        "regime": env.regime.value,
        "seed": env.seed,
        "axis_aligned": env.axis_aligned,
        "theta_star": env.theta_star.tolist(),
        "basis": env.basis.tolist(),
        "sha256": env.content_hash(),
    }


def import_instance(doc: dict) -> EnvironmentInstance:
    """Regenerate an instance from its exported document and verify its hash."""
    cfg = ProblemConfig(d=doc["d"], T=doc["T"], K=doc["K"], B=doc["B"], kappa=doc["kappa"])
    env = generate_instance(cfg, doc["regime"], doc["seed"], axis_aligned=doc.get("axis_aligned", False))
    if env.content_hash() != doc["sha256"]:
        raise ConfigurationError("instance hash mismatch: regenerated contexts differ from the exported document")
    if not np.array_equal(env.theta_star, np.asarray(doc["theta_star"])):
        raise ConfigurationError("instance theta_star differs from the exported document")
    return env


def save_instance(env: EnvironmentInstance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(export_instance(env), indent=2, sort_keys=True) + "\n")


def load_instance(path: str | Path) -> EnvironmentInstance:
    return import_instance(json.loads(Path(path).read_text()))
