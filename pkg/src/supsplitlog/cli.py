"""Command-line entry point.

Examples::

    supsplitlog run --algo supsplitlog-dd --d 20 --regime low --seeds 0-9 --out r.csv
    supsplitlog run --config sweep.json --d 100 --audit
    supsplitlog export-instance --d 5 --regime middle --seed 3 --out inst.json
    supsplitlog verify-instance inst.json

Exit codes: 0 success, 1 configuration or I/O error, 2 audit violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .environment import Regime, generate_instance, load_instance, save_instance
from .errors import AuditError, ConfigurationError
from .harness import ALGOS, ExperimentSpec, results_csv, results_json, run_experiment
from .policy import ProblemConfig

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_AUDIT = 2

# config-file key -> ProblemConfig field
_PROBLEM_KEYS = {"d": "d", "T": "T", "K": "K", "B": "B", "kappa": "kappa", "lambda": "lam", "delta": "delta"}
_SPEC_KEYS = ("algo", "regime", "seeds", "out", "format", "audit", "fit_steps", "fit_lr", "warmup", "mc_samples", "workers")


def parse_seeds(text) -> tuple[int, ...]:
    """Accept ``"0-9"``, ``"1,2,5"``, a single integer or a JSON list."""
    if isinstance(text, int):
        return (text,)
    if isinstance(text, (list, tuple)):
        return tuple(int(s) for s in text)
    seeds: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            if sep and lo:
                a, b = int(lo), int(hi)
                if b < a:
                    raise ConfigurationError(f"empty seed range {part!r}")
                seeds.extend(range(a, b + 1))
            else:
                seeds.append(int(part))
        except ValueError as exc:
            raise ConfigurationError(f"bad seed list {text!r}") from exc
    return tuple(seeds)


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which is reserved for audit failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _add_problem_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--lambda", dest="lambda_", type=float)
    p.add_argument("--B", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--regime", choices=[r.value for r in Regime])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="supsplitlog", description="Logistic-bandit regret experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run seeded experiments and write aggregate results")
    run.add_argument("--config", type=Path, help="JSON file with defaults; flags override it")
    run.add_argument("--algo", choices=ALGOS)
    _add_problem_flags(run)
    run.add_argument("--seeds", help="e.g. 0-9 or 1,4,7")
    run.add_argument("--out", help="output path; stdout when omitted")
    run.add_argument("--format", choices=("csv", "json"))
    run.add_argument("--audit", action="store_true", default=None, help="check deterministic invariants")
    run.add_argument("--fit-steps", dest="fit_steps", type=int)
    run.add_argument("--fit-lr", dest="fit_lr", type=float)
    run.add_argument("--warmup", type=int, help="warm-up size for the sup-style baselines")
    run.add_argument("--mc-samples", dest="mc_samples", type=int, help="posterior draws per round for ddrts-glm")
    run.add_argument("--workers", type=int, help="processes used across seeds")

    exp = sub.add_parser("export-instance", help="write an environment instance file")
    _add_problem_flags(exp)
    exp.add_argument("--seed", type=int, default=0)
    exp.add_argument("--axis-aligned", action="store_true")
    exp.add_argument("--out", required=True)

    ver = sub.add_parser("verify-instance", help="regenerate an instance file and check its hash")
    ver.add_argument("path")
    return parser


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError(f"config {path} must hold a JSON object")
    unknown = set(doc) - set(_PROBLEM_KEYS) - set(_SPEC_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return doc


def _merged(args: argparse.Namespace, base: dict) -> dict:
    merged = dict(base)
    flags = vars(args).copy()
    flags["lambda"] = flags.pop("lambda_", None)
    for key, value in flags.items():
        if value is not None and (key in _PROBLEM_KEYS or key in _SPEC_KEYS):
            merged[key] = value
    return merged


def _problem(conf: dict) -> ProblemConfig:
    kw = {field: conf[key] for key, field in _PROBLEM_KEYS.items() if key in conf}
    for required in ("d", "T", "K"):
        if required not in kw:
            raise ConfigurationError(f"missing required setting {required!r}")
    return ProblemConfig(**kw)


def spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    conf = _merged(args, _load_config(args.config))
    if "algo" not in conf:
        raise ConfigurationError("missing required setting 'algo'")
    extra = {k: conf[k] for k in ("fit_steps", "fit_lr", "warmup", "mc_samples", "workers") if k in conf}
    return ExperimentSpec(
        algo=conf["algo"],
        problem=_problem(conf),
        regime=Regime(conf.get("regime", "middle")),
        seeds=parse_seeds(conf["seeds"]) if "seeds" in conf else tuple(range(10)),
        out=conf.get("out"),
        fmt=conf.get("format", "csv"),
        audit=bool(conf.get("audit", False)),
        **extra,
    )


def _cmd_run(args) -> int:
    spec = spec_from_args(args)
    try:
        result = run_experiment(spec)
    except AuditError as exc:
        print("audit failed:", file=sys.stderr)
        for v in exc.violations:
            print(f"  {v}", file=sys.stderr)
        return EXIT_AUDIT
    if spec.out is None:
        sys.stdout.write(results_csv(result) if spec.fmt == "csv" else results_json(result))
    return EXIT_OK


def _cmd_export(args) -> int:
    conf = _merged(args, {})
    env = generate_instance(_problem(conf), conf.get("regime", "middle"), args.seed, axis_aligned=args.axis_aligned)
    save_instance(env, args.out)
    return EXIT_OK


def _cmd_verify(args) -> int:
    env = load_instance(args.path)
    print(f"ok {env.content_hash()}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "export-instance": _cmd_export, "verify-instance": _cmd_verify}[args.command]
    try:
        return handler(args)
    except (ValueError, OSError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
