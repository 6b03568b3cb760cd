"""Comparison policies: SupCB-GLM, SupLogistic and DDRTS-GLM.

These are practical reimplementations. The two sup-style baselines keep one
bucket per level, force uniform warm-up exploration until a level's bucket
holds ``warmup`` samples, and never share samples across levels. Their widths:

* SupCB-GLM: ``alpha * ||x||_{V^{-1}}`` with ``V = kappa*lambda*I + sum x x^T``
  and the same ``alpha`` as SupSplitLog.
* SupLogistic: ``gamma * ||x||_{H^{-1}}`` with the curvature-weighted
  ``H = lambda*I + sum mu'(x^T theta) x x^T`` at the level's fit, and
  ``gamma = sqrt(2 L) + L / (3 sqrt(lambda)) + B sqrt(lambda)``,
  ``L = log(4 T S K / delta)``.

DDRTS-GLM refits on every collected sample each round and plays the argmax of
parameters drawn from ``N(theta, H(theta)^{-1})``.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .errors import ConfigurationError, UsageError
from .logistic import FitOptions, fit_pilot, level_hessian
from .numerics import DesignState
from .policy import Branch, PolicyDecision, ProblemConfig, SampleBuffer, compute_alpha


def default_warmup(cfg: ProblemConfig) -> int:
    return math.ceil(math.sqrt(cfg.d * cfg.T))


class _Level:
    def __init__(self, level: int, cfg: ProblemConfig):
        self.level = level
        self.bucket = SampleBuffer(cfg.d)
        self.gram = DesignState.new(cfg.d, cfg.ridge)
        self.theta = np.zeros(cfg.d)
        self.dirty = False


class _SupBaseline:
    name = "sup-baseline"

    def __init__(
        self,
        cfg: ProblemConfig,
        rng: np.random.Generator,
        warmup: Optional[int] = None,
        fit_steps: int = 20,
        fit_lr: float = 0.3,
    ):
        self.cfg = cfg
        self.rng = rng
        self.warmup = default_warmup(cfg) if warmup is None else math.ceil(warmup)
        if self.warmup < 1:
            raise ConfigurationError("warmup must be >= 1")
        self.fit_steps = fit_steps
        self.fit_lr = fit_lr
        self.S = cfg.S if cfg.S is not None else max(cfg.T.bit_length() - 1, 1)
        self.levels = [_Level(s, cfg) for s in range(1, self.S + 1)]
        self.inv_sqrt_T = 1.0 / math.sqrt(cfg.T)

    def _estimate(self, lvl: _Level) -> np.ndarray:
        if lvl.dirty:
            opts = FitOptions(
                radius=self.cfg.B, reg=self.cfg.lam, steps=self.fit_steps, learning_rate=self.fit_lr, warm_start=lvl.theta
            )
            lvl.theta = fit_pilot(lvl.bucket.X, lvl.bucket.r, opts)
            lvl.dirty = False
        return lvl.theta

    def _widths(self, lvl: _Level, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def select_action(self, contexts: np.ndarray) -> PolicyDecision:
        contexts = np.asarray(contexts, dtype=float)
        if contexts.shape != (self.cfg.K, self.cfg.d):
            raise UsageError(f"contexts must have shape ({self.cfg.K}, {self.cfg.d}), got {contexts.shape}")
        arms = np.arange(self.cfg.K)
        s = 1
        while True:
            lvl = self.levels[s - 1]
            if len(lvl.bucket) < self.warmup:
                a = int(arms[self.rng.integers(len(arms))])
                return PolicyDecision(a, s, Branch.WARMUP, float("nan"), float("nan"))
            theta = self._estimate(lvl)
            XA = contexts[arms]
            means = XA @ theta
            widths = self._widths(lvl, XA)
            if np.all(widths <= self.inv_sqrt_T):
                j = int(np.argmax(means))
                return PolicyDecision(int(arms[j]), s, Branch.EXPLOIT, float(widths[j]), float(means[j]))
            level_conf = 2.0**-s
            if np.any(widths > level_conf):
                j = int(np.argmax(widths))
                return PolicyDecision(int(arms[j]), s, Branch.EXPLORE, float(widths[j]), float(means[j]))
            if s == self.S:
                j = int(np.argmax(means))
                return PolicyDecision(int(arms[j]), s, Branch.EXPLOIT_CAPPED, float(widths[j]), float(means[j]))
            arms = arms[means >= means.max() - 2 * level_conf]
            s += 1

    def observe(self, decision: PolicyDecision, x: np.ndarray, r: int, t: int) -> None:
        if not decision.branch.feeds_bucket:
            return
        lvl = self.levels[decision.level - 1]
        lvl.bucket.append(x, r, t)
        lvl.gram.insert(x)
        lvl.dirty = True

    def summary(self) -> dict:
        return {"S": self.S, "warmup": self.warmup, "bucket_sizes": [len(l.bucket) for l in self.levels]}

    def bucket_rounds(self) -> list[set[int]]:
        return [set(l.bucket.t.tolist()) for l in self.levels]

    def audit(self) -> list[str]:
        out = []
        for lvl in self.levels:
            rounds = lvl.bucket.t.tolist()
            if len(set(rounds)) != len(rounds):
                out.append(f"bucket: level {lvl.level} holds a round twice")
        return out


class SupCBGLM(_SupBaseline):
    name = "supcb-glm"

    def __init__(self, cfg: ProblemConfig, rng: np.random.Generator, **kw):
        super().__init__(cfg, rng, **kw)
        self.alpha = compute_alpha(cfg, self.S)

    def _widths(self, lvl: _Level, X: np.ndarray) -> np.ndarray:
        return self.alpha * np.sqrt(lvl.gram.mahalanobis_sq(X))


def suplogistic_gamma(cfg: ProblemConfig, S: int) -> float:
    L = math.log(4 * cfg.T * S * cfg.K / cfg.delta)
    return math.sqrt(2 * L) + L / (3 * math.sqrt(cfg.lam)) + cfg.B * math.sqrt(cfg.lam)


class SupLogistic(_SupBaseline):
    name = "suplogistic"

    def __init__(self, cfg: ProblemConfig, rng: np.random.Generator, **kw):
        super().__init__(cfg, rng, **kw)
        self.gamma = suplogistic_gamma(cfg, self.S)
        self._hinv: dict[int, np.ndarray] = {}

    def _estimate(self, lvl: _Level) -> np.ndarray:
        if lvl.dirty or lvl.level not in self._hinv:
            theta = super()._estimate(lvl)
            H = level_hessian(theta, lvl.bucket.X, lvl.bucket.r, self.cfg.lam)
            self._hinv[lvl.level] = np.linalg.inv(H)
        return lvl.theta

    def _widths(self, lvl: _Level, X: np.ndarray) -> np.ndarray:
        Hinv = self._hinv[lvl.level]
        q = np.einsum("ij,jk,ik->i", X, Hinv, X)
        return self.gamma * np.sqrt(np.maximum(q, 0.0))


def gaussian_from_hessian(mean: np.ndarray, H: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``mean + H^{-1/2} z`` using the symmetric square root; ``z`` may be (d,) or (m, d)."""
    evals, evecs = np.linalg.eigh(H)
    root = (evecs / np.sqrt(evals)) @ evecs.T
    return mean + z @ root


class DDRTSGLM:
    name = "ddrts-glm"

    def __init__(
        self,
        cfg: ProblemConfig,
        rng: np.random.Generator,
        mc_samples: int = 1,
        fit_steps: int = 20,
        fit_lr: float = 0.3,
    ):
        if mc_samples < 1:
            raise ConfigurationError("mc_samples must be >= 1")
        self.cfg = cfg
        self.rng = rng
        self.mc_samples = mc_samples
        self.fit_steps = fit_steps
        self.fit_lr = fit_lr
        self.data = SampleBuffer(cfg.d)
        self.theta = np.zeros(cfg.d)

    def posterior(self) -> tuple[np.ndarray, np.ndarray]:
        """Refit on all samples; returns the fit and the Hessian at it."""
        if len(self.data):
            opts = FitOptions(
                radius=self.cfg.B, reg=self.cfg.lam, steps=self.fit_steps, learning_rate=self.fit_lr, warm_start=self.theta
            )
            self.theta = fit_pilot(self.data.X, self.data.r, opts)
        H = level_hessian(self.theta, self.data.X, self.data.r, self.cfg.lam)
        return self.theta, H

    def select_action(self, contexts: np.ndarray, z: Optional[np.ndarray] = None) -> PolicyDecision:
        contexts = np.asarray(contexts, dtype=float)
        theta, H = self.posterior()
        if z is None:
            z = self.rng.standard_normal((self.mc_samples, self.cfg.d))
        draws = np.atleast_2d(gaussian_from_hessian(theta, H, z))
        scores = draws @ contexts.T
        winners = np.argmax(scores, axis=1)
        if len(winners) == 1:
            a = int(winners[0])
        else:
            probs = np.bincount(winners, minlength=len(contexts)) / len(winners)
            a = int(self.rng.choice(len(contexts), p=probs))
        m = float(contexts[a] @ theta)
        return PolicyDecision(a, 1, Branch.SAMPLE, float("nan"), m)

    def observe(self, decision: PolicyDecision, x: np.ndarray, r: int, t: int) -> None:
        self.data.append(x, r, t)

    def summary(self) -> dict:
        return {"samples": len(self.data)}

    def bucket_rounds(self) -> list[set[int]]:
        return []

    def audit(self) -> list[str]:
        return []
