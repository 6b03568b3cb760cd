"""SupSplitLog: level-wise arm elimination with split pilot/estimation buckets.

Each level keeps two disjoint sample sets. The pilot set feeds a projected
gradient fit of the regularized logistic loss; the estimation set feeds a
single Newton correction from that pilot point. Widths are measured against the
estimation-set Gram matrix only, and a new exploration sample goes to the
pilot set when its pilot-metric norm exceeds a level-dependent threshold.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, UsageError
from .logistic import FitOptions, Sample, fit_pilot, one_step_correct
from .numerics import DesignState


class Variant(str, enum.Enum):
    FIXED = "fixed"
    DATA_DEPENDENT = "data-dependent"


class Branch(str, enum.Enum):
    EXPLORE_TO_PILOT = "explore_to_pilot"
    EXPLORE_TO_ESTIMATION = "explore_to_estimation"
    EXPLOIT = "exploit"
    EXPLOIT_CAPPED = "exploit_capped"
    # used by the baselines
    WARMUP = "warmup"
    EXPLORE = "explore"
    SAMPLE = "sample"

    @property
    def feeds_bucket(self) -> bool:
        return self in _BUCKET_BRANCHES


_BUCKET_BRANCHES = {Branch.EXPLORE_TO_PILOT, Branch.EXPLORE_TO_ESTIMATION, Branch.WARMUP, Branch.EXPLORE}


@dataclass(frozen=True)
class ProblemConfig:
    d: int
    T: int
    K: int
    B: float = 1.0
    kappa: float = 20.0
    lam: float = 1.0
    delta: float = 0.1
    L_mu: float = 0.25
    variant: Variant = Variant.FIXED
    S: Optional[int] = None  # overrides the variant's default number of levels

    def __post_init__(self):
        for name in ("d", "T", "K"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {v!r}")
        if self.T < 2:
            raise ConfigurationError("T must be at least 2")
        if not self.B > 0:
            raise ConfigurationError("B must be positive")
        if not self.kappa >= 4:
            raise ConfigurationError("kappa must be >= 4 so that 1/kappa <= L_mu")
        if not self.lam > 0 or self.lam < 1.0 / self.kappa:
            raise ConfigurationError("lambda must satisfy lambda >= 1/kappa")
        if not 0 < self.delta < 1:
            raise ConfigurationError("delta must lie in (0, 1)")
        if self.L_mu != 0.25:
            raise ConfigurationError("L_mu is fixed at 1/4 for the logistic link")
        if self.S is not None and (int(self.S) != self.S or self.S < 1):
            raise ConfigurationError("S override must be a positive integer")
        object.__setattr__(self, "variant", Variant(self.variant))

    @property
    def ridge(self) -> float:
        return self.kappa * self.lam

    @property
    def dim_log(self) -> float:
        """``log(1 + T / (kappa lambda d))``."""
        return math.log1p(self.T / (self.ridge * self.d))

    def num_levels(self) -> int:
        return int(self.S) if self.S is not None else compute_S(self.T, self.variant)


def compute_S(T: int, variant: Variant) -> int:
    if T < 2:
        raise ConfigurationError("T must be at least 2")
    variant = Variant(variant)
    if variant is Variant.FIXED:
        # floor(0.5 log2 T) = floor(log2 T / 2); integer-exact via bit length
        S = (T.bit_length() - 1) // 2 if isinstance(T, int) else int(math.floor(0.5 * math.log2(T)))
    else:
        S = T.bit_length() - 1 if isinstance(T, int) else int(math.floor(math.log2(T)))
    return max(S, 1)


def compute_alpha(cfg: ProblemConfig, S: int) -> float:
    L = math.log(4 * cfg.T * S * cfg.K / cfg.delta)
    alpha1 = math.sqrt(2 * cfg.L_mu * cfg.kappa**2 * L) + math.sqrt(cfg.kappa / (9 * cfg.lam)) * L
    alpha2 = cfg.B * math.sqrt(cfg.kappa * cfg.lam)
    return 2 * (alpha1 + alpha2)


def compute_beta_fixed(cfg: ProblemConfig, S: int) -> float:
    inner = 0.5 * cfg.d * cfg.dim_log + 0.5 * math.log(2 * S / cfg.delta)
    return cfg.kappa * math.sqrt(inner) + cfg.B * math.sqrt(cfg.ridge)


def compute_tau_fixed(cfg: ProblemConfig, S: int, s: int, beta: float) -> float:
    if not 1 <= s <= S:
        raise UsageError(f"level {s} outside [1, {S}]")
    second = 2.0**-s / math.sqrt(32 * cfg.L_mu * cfg.kappa * cfg.d * cfg.dim_log)
    return min(1.0, second) / beta**2


def compute_beta_adaptive(V_P: DesignState, cfg: ProblemConfig, S: int) -> float:
    return cfg.kappa / math.sqrt(2) * math.sqrt(V_P.logdet_ratio + math.log(2 * S / cfg.delta)) + cfg.B * math.sqrt(
        cfg.ridge
    )


def compute_tau_adaptive(V_E: DesignState, beta_t: float, cfg: ProblemConfig, s: int) -> float:
    ld = V_E.logdet_ratio
    if ld <= 0:
        return 1.0 / beta_t**2
    second = 2.0**-s / math.sqrt(32 * cfg.L_mu * cfg.kappa * ld)
    return min(1.0, second) / beta_t**2


class SampleBuffer:
    """Growable (X, r, t) storage; views are returned without copying."""

    def __init__(self, dim: int, capacity: int = 64):
        self._X = np.zeros((capacity, dim))
        self._r = np.zeros(capacity)
        self._t = np.zeros(capacity, dtype=np.int64)
        self.n = 0

    def append(self, x: np.ndarray, r: float, t: int) -> None:
        if self.n == len(self._r):
            cap = 2 * len(self._r)
            self._X = np.resize(self._X, (cap, self._X.shape[1]))
            self._r = np.resize(self._r, cap)
            self._t = np.resize(self._t, cap)
        self._X[self.n] = x
        self._r[self.n] = r
        self._t[self.n] = t
        self.n += 1

    def __len__(self) -> int:
        return self.n

    @property
    def X(self) -> np.ndarray:
        return self._X[: self.n]

    @property
    def r(self) -> np.ndarray:
        return self._r[: self.n]

    @property
    def t(self) -> np.ndarray:
        return self._t[: self.n]


@dataclass
class LevelState:
    level: int
    pilot: SampleBuffer
    estimation: SampleBuffer
    V_P: DesignState
    V_E: DesignState
    theta_bar: np.ndarray
    theta_hat: np.ndarray
    pilot_dirty: bool = False
    est_dirty: bool = False

    @classmethod
    def new(cls, level: int, cfg: ProblemConfig) -> "LevelState":
        return cls(
            level=level,
            pilot=SampleBuffer(cfg.d),
            estimation=SampleBuffer(cfg.d),
            V_P=DesignState.new(cfg.d, cfg.ridge),
            V_E=DesignState.new(cfg.d, cfg.ridge),
            theta_bar=np.zeros(cfg.d),
            theta_hat=np.zeros(cfg.d),
        )

    def refresh(self, cfg: ProblemConfig, steps: int, lr: float) -> None:
        if self.pilot_dirty:
            opts = FitOptions(radius=cfg.B, reg=cfg.lam, steps=steps, learning_rate=lr, warm_start=self.theta_bar)
            self.theta_bar = fit_pilot(self.pilot.X, self.pilot.r, opts)
            self.pilot_dirty = False
            self.est_dirty = True
        if self.est_dirty:
            self.theta_hat = one_step_correct(self.theta_bar, self.estimation.X, self.estimation.r, cfg.lam)
            self.est_dirty = False


@dataclass
class PolicyDecision:
    action: int
    level: int
    branch: Branch
    width: float
    mean: float
    pilot_score: float = float("nan")
    threshold: float = float("nan")


def _argmax(values: np.ndarray) -> int:
    # np.argmax returns the first maximal index
    return int(np.argmax(values))


class SupSplitLog:
    """The policy; ``variant`` in the config picks fixed or data-dependent thresholds."""

    name = "supsplitlog"

    def __init__(self, cfg: ProblemConfig, fit_steps: int = 20, fit_lr: float = 0.3):
        self.cfg = cfg
        self.fit_steps = fit_steps
        self.fit_lr = fit_lr
        self.S = cfg.num_levels()
        self.alpha = compute_alpha(cfg, self.S)
        self.adaptive = cfg.variant is Variant.DATA_DEPENDENT
        if self.adaptive:
            self.beta = None
            self.taus = None
        else:
            self.beta = compute_beta_fixed(cfg, self.S)
            self.taus = [compute_tau_fixed(cfg, self.S, s, self.beta) for s in range(1, self.S + 1)]
        self.levels = [LevelState.new(s, cfg) for s in range(1, self.S + 1)]
        self.inv_sqrt_T = 1.0 / math.sqrt(cfg.T)

    def threshold(self, s: int) -> float:
        """Current pilot/estimation threshold at level ``s`` (1-based)."""
        if not self.adaptive:
            return self.taus[s - 1]
        lvl = self.levels[s - 1]
        beta_t = compute_beta_adaptive(lvl.V_P, self.cfg, self.S)
        return compute_tau_adaptive(lvl.V_E, beta_t, self.cfg, s)

    def estimates(self, s: int) -> LevelState:
        lvl = self.levels[s - 1]
        lvl.refresh(self.cfg, self.fit_steps, self.fit_lr)
        return lvl

    def select_action(self, contexts: np.ndarray) -> PolicyDecision:
        contexts = np.asarray(contexts, dtype=float)
        if contexts.shape != (self.cfg.K, self.cfg.d):
            raise UsageError(f"contexts must have shape ({self.cfg.K}, {self.cfg.d}), got {contexts.shape}")
        arms = np.arange(self.cfg.K)
        s = 1
        while True:
            lvl = self.estimates(s)
            XA = contexts[arms]
            means = XA @ lvl.theta_hat
            widths = self.alpha * np.sqrt(lvl.V_E.mahalanobis_sq(XA))
            level_conf = 2.0**-s
            if np.any(widths > level_conf):
                j = _argmax(widths)
                a = int(arms[j])
                score = lvl.V_P.mahalanobis_sq(contexts[a])
                tau = self.threshold(s)
                branch = Branch.EXPLORE_TO_PILOT if score > tau else Branch.EXPLORE_TO_ESTIMATION
                return PolicyDecision(a, s, branch, float(widths[j]), float(means[j]), score, tau)
            if np.all(widths <= self.inv_sqrt_T) or s == self.S:
                j = _argmax(means)
                branch = Branch.EXPLOIT if np.all(widths <= self.inv_sqrt_T) else Branch.EXPLOIT_CAPPED
                return PolicyDecision(int(arms[j]), s, branch, float(widths[j]), float(means[j]))
            arms = arms[means >= means.max() - 2 * level_conf]
            s += 1

    def record_reward(self, decision: PolicyDecision, sample: Sample) -> None:
        if not decision.branch.feeds_bucket:
            raise UsageError(f"branch {decision.branch.value} does not add to any bucket")
        lvl = self.levels[decision.level - 1]
        if decision.branch is Branch.EXPLORE_TO_PILOT:
            lvl.pilot.append(sample.x, sample.r, sample.t)
            lvl.V_P.insert(sample.x)
            lvl.pilot_dirty = True
        elif decision.branch is Branch.EXPLORE_TO_ESTIMATION:
            lvl.estimation.append(sample.x, sample.r, sample.t)
            lvl.V_E.insert(sample.x)
            lvl.est_dirty = True
        else:
            raise UsageError(f"unexpected branch {decision.branch.value}")

    def observe(self, decision: PolicyDecision, x: np.ndarray, r: int, t: int) -> None:
        if decision.branch.feeds_bucket:
            self.record_reward(decision, Sample(x, int(r), t))

    # diagnostics

    def confidence_table(self, contexts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Means and widths of every arm at every level, shape ``(S, K)``."""
        contexts = np.asarray(contexts, dtype=float)
        means = np.empty((self.S, len(contexts)))
        widths = np.empty_like(means)
        for s in range(1, self.S + 1):
            lvl = self.estimates(s)
            means[s - 1] = contexts @ lvl.theta_hat
            widths[s - 1] = self.alpha * np.sqrt(lvl.V_E.mahalanobis_sq(contexts))
        return means, widths

    def pilot_errors(self, theta_star: np.ndarray) -> np.ndarray:
        """``||theta_bar - theta_star||_{V_P}`` at every level."""
        out = np.empty(self.S)
        for s in range(1, self.S + 1):
            lvl = self.estimates(s)
            diff = lvl.theta_bar - theta_star
            out[s - 1] = math.sqrt(max(float(diff @ lvl.V_P.matrix @ diff), 0.0))
        return out

    def pilot_radius(self, s: int) -> float:
        if not self.adaptive:
            return self.beta
        return compute_beta_adaptive(self.levels[s - 1].V_P, self.cfg, self.S)

    def summary(self) -> dict:
        return {
            "S": self.S,
            "alpha": self.alpha,
            "pilot_sizes": [len(l.pilot) for l in self.levels],
            "estimation_sizes": [len(l.estimation) for l in self.levels],
        }

    def audit(self) -> list[str]:
        """Deterministic bucket invariants; returns a list of violation messages."""
        cfg = self.cfg
        out: list[str] = []
        tol = 1e-9
        fixed_beta = compute_beta_fixed(cfg, self.S)
        for lvl in self.levels:
            s = lvl.level
            n_p, n_e = len(lvl.pilot), len(lvl.estimation)
            tau_fixed = compute_tau_fixed(cfg, self.S, s, fixed_beta)
            bound_p = 2 * cfg.d * cfg.dim_log / tau_fixed
            if n_p > bound_p * (1 + tol):
                out.append(f"pilot cardinality: level {s} has {n_p} > {bound_p:.6g}")
            bound_e = 2 * self.alpha**2 * cfg.d * 4.0**s * cfg.dim_log
            if n_e > bound_e * (1 + tol):
                out.append(f"estimation cardinality: level {s} has {n_e} > {bound_e:.6g}")
            if self.adaptive:
                tau_T = self.threshold(s)
                bound_p2 = 2 * lvl.V_P.logdet_ratio / tau_T
                if n_p > bound_p2 * (1 + tol) + tol:
                    out.append(f"adaptive pilot cardinality: level {s} has {n_p} > {bound_p2:.6g}")
                bound_e2 = 2 * self.alpha**2 * 4.0**s * lvl.V_E.logdet_ratio
                if n_e > bound_e2 * (1 + tol) + tol:
                    out.append(f"adaptive estimation cardinality: level {s} has {n_e} > {bound_e2:.6g}")
            tp, te = set(lvl.pilot.t.tolist()), set(lvl.estimation.t.tolist())
            if tp & te or len(tp) != n_p or len(te) != n_e:
                out.append(f"disjointness: level {s} pilot and estimation rounds overlap")
            for name, buf, V in (("pilot", lvl.pilot, lvl.V_P), ("estimation", lvl.estimation, lvl.V_E)):
                dense = cfg.ridge * np.eye(cfg.d) + buf.X.T @ buf.X
                if np.max(np.abs(dense - V.matrix)) > 1e-8 * max(1.0, np.max(np.abs(dense))):
                    out.append(f"design matrix: level {s} {name} Gram matrix drifted from its samples")
        return out

    def bucket_rounds(self) -> list[set[int]]:
        return [set(l.pilot.t.tolist()) | set(l.estimation.t.tolist()) for l in self.levels]
