"""Seeded multi-run experiments, invariant audits, aggregation and result files."""

from __future__ import annotations

import csv
import functools
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .baselines import DDRTSGLM, SupCBGLM, SupLogistic
from .environment import (
    EnvironmentInstance,
    Regime,
    all_arms_logdet,
    generate_instance,
    instant_regret,
    sample_reward,
    streams,
)
from .errors import AuditError, ConfigurationError
from .numerics import DesignState
from .policy import ProblemConfig, SupSplitLog, Variant

ALGOS = ("supsplitlog", "supsplitlog-dd", "supcb-glm", "suplogistic", "ddrts-glm")


@dataclass(frozen=True)
class ExperimentSpec:
    algo: str
    problem: ProblemConfig
    regime: Regime = Regime.MIDDLE
    seeds: tuple[int, ...] = tuple(range(10))
    out: Optional[str] = None
    fmt: str = "csv"
    audit: bool = False
    fit_steps: int = 20
    fit_lr: float = 0.3
    warmup: Optional[int] = None
    mc_samples: int = 1
    workers: int = 1
    axis_aligned: bool = False

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ConfigurationError(f"unknown algo {self.algo!r}; choose from {', '.join(ALGOS)}")
        if len(self.seeds) < 1:
            raise ConfigurationError("at least one seed is required")
        if self.fmt not in ("csv", "json"):
            raise ConfigurationError(f"unknown output format {self.fmt!r}")
        object.__setattr__(self, "regime", Regime(self.regime))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        variant = Variant.DATA_DEPENDENT if self.algo == "supsplitlog-dd" else Variant.FIXED
        if self.problem.variant is not variant:
            object.__setattr__(self, "problem", replace(self.problem, variant=variant))


@dataclass
class RunRecord:
    seed: int
    actions: np.ndarray
    levels: np.ndarray
    branches: list[str]
    inst_regret: np.ndarray
    cum_regret: np.ndarray
    logdet_all: np.ndarray
    logdet_chosen: np.ndarray
    noise: np.ndarray
    summary: dict = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)


def make_policy(spec: ExperimentSpec, rng: np.random.Generator):
    cfg = spec.problem
    kw = dict(fit_steps=spec.fit_steps, fit_lr=spec.fit_lr)
    if spec.algo in ("supsplitlog", "supsplitlog-dd"):
        return SupSplitLog(cfg, **kw)
    if spec.algo == "supcb-glm":
        return SupCBGLM(cfg, rng, warmup=spec.warmup, **kw)
    if spec.algo == "suplogistic":
        return SupLogistic(cfg, rng, warmup=spec.warmup, **kw)
    return DDRTSGLM(cfg, rng, mc_samples=spec.mc_samples, **kw)


@functools.lru_cache(maxsize=16)
def _instance(cfg: ProblemConfig, regime: Regime, seed: int, axis_aligned: bool):
    # instances do not depend on the policy, so runs of different algorithms share them
    env = generate_instance(cfg, regime, seed, axis_aligned=axis_aligned)
    logdet = all_arms_logdet(env, cfg.ridge)
    logdet.setflags(write=False)
    return env, logdet


def run_single(spec: ExperimentSpec, seed: int, env: Optional[EnvironmentInstance] = None, hook=None) -> RunRecord:
    """Play one seed. ``hook(t, policy, env)`` is called before each decision if given."""
    cfg = spec.problem
    if env is None:
        env, logdet_all = _instance(replace(cfg, variant=Variant.FIXED, S=None), spec.regime, seed, spec.axis_aligned)
    else:
        logdet_all = all_arms_logdet(env, cfg.ridge)
    _, reward_rng, policy_rng = streams(seed)
    policy = make_policy(spec, policy_rng)

    T = cfg.T
    actions = np.empty(T, dtype=np.int64)
    levels = np.empty(T, dtype=np.int64)
    branches: list[str] = []
    inst = np.empty(T)
    noise = np.empty(T)
    logdet_chosen = np.empty(T)
    chosen = DesignState.new(cfg.d, cfg.ridge)
    potential = 0.0

    for t in range(T):
        if hook is not None:
            hook(t, policy, env)
        X = env.contexts[t]
        dec = policy.select_action(X)
        a = dec.action
        r = sample_reward(env, t, a, reward_rng)
        policy.observe(dec, X[a], r, t)
        actions[t] = a
        levels[t] = dec.level
        branches.append(dec.branch.value)
        inst[t] = instant_regret(env, t, a)
        noise[t] = r - env.means[t, a]
        potential += min(1.0, chosen.mahalanobis_sq(X[a]))
        chosen.insert(X[a])
        logdet_chosen[t] = chosen.logdet_ratio

    record = RunRecord(
        seed=seed,
        actions=actions,
        levels=levels,
        branches=branches,
        inst_regret=inst,
        cum_regret=np.cumsum(inst),
        logdet_all=logdet_all,
        logdet_chosen=logdet_chosen,
        noise=noise,
        summary=policy.summary(),
    )
    record.summary["branch_counts"] = {b: branches.count(b) for b in sorted(set(branches))}
    if spec.audit:
        record.violations = audit_run(spec, policy, record, potential)
    return record


def audit_run(spec: ExperimentSpec, policy, record: RunRecord, potential: float) -> list[str]:
    """Deterministic invariants that must hold on every run, whatever the rewards."""
    cfg = spec.problem
    out = list(policy.audit())
    tol = 1e-9
    final_logdet = float(record.logdet_chosen[-1])
    bound = cfg.d * cfg.dim_log
    if final_logdet > bound * (1 + tol):
        out.append(f"logdet: chosen-arm log-det ratio {final_logdet:.6g} exceeds {bound:.6g}")
    if potential > 2 * final_logdet * (1 + tol) + tol:
        out.append(f"elliptical potential: {potential:.6g} > 2 * {final_logdet:.6g}")

    # every bucketed round belongs to exactly one level, and exactly the bucket-feeding rounds are bucketed
    buckets = policy.bucket_rounds()
    if buckets:
        seen: set[int] = set()
        for s, rounds in enumerate(buckets, start=1):
            if seen & rounds:
                out.append(f"buckets: level {s} shares rounds with a lower level")
            seen |= rounds
        fed = {t for t, b in enumerate(record.branches) if b in _FEEDING}
        if fed != seen:
            out.append("coverage: bucketed rounds differ from exploration rounds")

    inst = record.inst_regret
    if np.any(inst < 0):
        out.append("regret: negative instantaneous regret")
    if np.any(inst > cfg.L_mu * 2 * cfg.B + tol):
        out.append("regret: instantaneous regret above the Lipschitz bound")
    if np.any(np.diff(record.cum_regret) < 0):
        out.append("regret: cumulative regret decreased")
    return out


_FEEDING = {"explore_to_pilot", "explore_to_estimation", "warmup", "explore"}


@dataclass
class AggregateResult:
    algo: str
    regime: str
    config: dict
    seeds: list[int]
    regret_mean: list[float]
    regret_std: list[float]
    logdet_all_mean: list[float]
    logdet_chosen_mean: list[float]
    per_seed: list[dict]

    @property
    def final_regret_mean(self) -> float:
        return self.regret_mean[-1]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "AggregateResult":
        return cls(**doc)


def _seed_summary(rec: RunRecord, audited: bool) -> dict:
    return {
        "seed": rec.seed,
        "final_regret": float(rec.cum_regret[-1]),
        "final_logdet_all": float(rec.logdet_all[-1]),
        "final_logdet_chosen": float(rec.logdet_chosen[-1]),
        "policy": rec.summary,
        "level_histogram": {str(k): int(v) for k, v in zip(*np.unique(rec.levels, return_counts=True))},
        "audit": ("passed" if not rec.violations else "failed") if audited else "skipped",
        "violations": list(rec.violations),
    }


def aggregate(spec: ExperimentSpec, records: list[RunRecord]) -> AggregateResult:
    regrets = np.stack([r.cum_regret for r in records])
    cfg = spec.problem
    return AggregateResult(
        algo=spec.algo,
        regime=spec.regime.value,
        config={
            "d": cfg.d, "T": cfg.T, "K": cfg.K, "B": cfg.B, "kappa": cfg.kappa, "lambda": cfg.lam,
            "delta": cfg.delta, "variant": cfg.variant.value, "fit_steps": spec.fit_steps, "fit_lr": spec.fit_lr,
        },
        seeds=[r.seed for r in records],
        regret_mean=regrets.mean(axis=0).tolist(),
        regret_std=regrets.std(axis=0).tolist(),
        logdet_all_mean=np.mean([r.logdet_all for r in records], axis=0).tolist(),
        logdet_chosen_mean=np.mean([r.logdet_chosen for r in records], axis=0).tolist(),
        per_seed=[_seed_summary(r, spec.audit) for r in records],
    )


def _run_seed(args):
    spec, seed = args
    return run_single(spec, seed)


def run_records(spec: ExperimentSpec) -> list[RunRecord]:
    """Run every seed; results come back in seed-list order regardless of workers."""
    jobs = [(spec, s) for s in spec.seeds]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            return list(pool.map(_run_seed, jobs))
    return [_run_seed(j) for j in jobs]


def run_experiment(spec: ExperimentSpec) -> AggregateResult:
    records = run_records(spec)
    result = aggregate(spec, records)
    if spec.audit:
        bad = [f"seed {r.seed}: {v}" for r in records for v in r.violations]
        if bad:
            raise AuditError(bad)
    if spec.out:
        emit_results(result, spec.out, spec.fmt)
    return result


def _fmt(x: float) -> str:
    return format(x, ".17g")


def results_csv(result: AggregateResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "regret_mean", "regret_std", "logdet_all_arms_mean", "logdet_chosen_mean"])
    rows = zip(result.regret_mean, result.regret_std, result.logdet_all_mean, result.logdet_chosen_mean)
    for t, row in enumerate(rows, start=1):
        w.writerow([t, *map(_fmt, row)])
    return buf.getvalue()


def results_json(result: AggregateResult) -> str:
    return json.dumps(result.to_dict(), indent=1, sort_keys=True) + "\n"


def emit_results(result: AggregateResult, path, fmt: str = "csv") -> None:
    text = results_csv(result) if fmt == "csv" else results_json(result)
    path = Path(path)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def load_results(path) -> AggregateResult:
    return AggregateResult.from_dict(json.loads(Path(path).read_text()))
