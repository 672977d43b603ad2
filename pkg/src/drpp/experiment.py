"""Experiment configuration, sweep execution and artifact emission."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .algorithms import ALGORITHMS, RgdConfig, RrmConfig, RunTrace, run
from .analysis import compute_constants
from .core import RobustProblem
from .data import CreditSchema, credit_problem, ingest_credit_csv, synth_instance
from .env import ShiftMap, make_env
from .errors import DrppError, InvalidArgument
from .inner import InnerSolveConfig

TRAJECTORY_COLUMNS = ("epsilon", "algorithm", "iteration", "param_gap", "param_gap_scaled",
                      "robust_risk", "plain_loss", "accuracy", "detection_rate")
PHASE_COLUMNS = ("epsilon", "algorithm", "iteration", "phase", "robust_risk", "plain_loss",
                 "accuracy", "detection_rate")
DETECTION_EPS_COLUMNS = ("epsilon", "method", "iteration", "detection_rate")
DETECTION_LAM_COLUMNS = ("lam_c", "epsilon", "algorithm", "iteration", "detection_rate")
SUMMARY_COLUMNS = ("epsilon", "lam_c", "algorithm", "status", "stop_reason", "iterations",
                   "final_param_gap", "final_robust_risk", "final_accuracy",
                   "final_detection_rate", "flags", "error")
RUN_LOG_FIELDS = ("config_hash", "epsilon", "epsilon_effective", "lam_c", "algorithm", "iteration",
                  "theta", "param_gap", "param_gap_scaled", "robust_risk", "plain_loss", "accuracy",
                  "detection_rate", "fit_robust_risk", "fit_plain_loss", "fit_accuracy",
                  "fit_detection_rate", "inner_gap_max", "inner_iters_mean", "argmin_iters",
                  "clamped", "stop_reason", "flags", "wall_time")

# Names used for the three curves of the detection-vs-epsilon plot.
METHOD_NAMES = {"static": "static", "pp_rrm": "pp", "rrm": "dr-pp"}

ARTIFACTS = ("run_log.jsonl", "trajectories.csv", "phase_metrics.csv",
             "detection_vs_epsilon.csv", "detection_vs_lambda.csv", "constants.txt", "summary.csv")


@dataclass(frozen=True)
class InstanceConfig:
    source: str = "synthetic"            # synthetic | credit_csv
    path: Optional[str] = None           # CSV path when source is credit_csv
    kind: str = "logistic-gaussian"      # synthetic generator
    dim: int = 10
    n: int = 1000
    seed: Optional[int] = None           # None: use the experiment seed
    box_bound: float = 5.0
    ridge: float = 0.1
    theta_radius: float = 10.0
    target: str = "SeriousDlqin2yrs"


@dataclass(frozen=True)
class PenaltyConfig:
    lam_c: float = 30.0
    lam_a: float = 0.1


@dataclass(frozen=True)
class SweepConfig:
    epsilon: tuple = (1.0, 10.0, 60.0, 100.0)
    lam_c: tuple = ()                    # empty: only penalty.lam_c


@dataclass(frozen=True)
class ExperimentConfig:
    instance: InstanceConfig = field(default_factory=InstanceConfig)
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    algorithms: tuple = ("rrm", "pp_rrm", "static")
    epsilon_scale: float = 0.01          # effective epsilon = scale * sweep value
    outer_iters: int = 20
    eta: float = 1e-2
    inner_tol: float = 1e-9
    max_ascent_iters: int = 10_000
    argmin_tol: float = 1e-6
    argmin_max_iters: int = 200_000
    batch_size: Optional[int] = None
    theta0: str = "static"               # static | zero
    compounding: bool = False
    seed: int = 0
    out: str = "runs/default"

    def __post_init__(self):
        eps = tuple(float(e) for e in self.sweep.epsilon)
        if not eps:
            raise InvalidArgument("sweep.epsilon must be non-empty")
        if any(not (e >= 0 and math.isfinite(e)) for e in eps):
            raise InvalidArgument("every epsilon must be finite and >= 0")
        if any(not lam > 0 for lam in self.sweep.lam_c):
            raise InvalidArgument("every lam_c must be positive")
        if not self.algorithms:
            raise InvalidArgument("at least one algorithm is required")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise InvalidArgument(f"unknown algorithm(s) {unknown}; choose from {ALGORITHMS}")
        if self.instance.source not in ("synthetic", "credit_csv"):
            raise InvalidArgument(f"unknown instance source {self.instance.source!r}")
        if self.instance.source == "credit_csv" and not self.instance.path:
            raise InvalidArgument("instance.path is required for credit_csv")
        if self.theta0 not in ("static", "zero"):
            raise InvalidArgument("theta0 must be 'static' or 'zero'")
        if self.outer_iters < 1:
            raise InvalidArgument("outer_iters must be >= 1")
        if not self.epsilon_scale >= 0:
            raise InvalidArgument("epsilon_scale must be >= 0")

    @property
    def lam_values(self):
        return tuple(self.sweep.lam_c) or (self.penalty.lam_c,)

    def to_dict(self):
        d = asdict(self)
        d["algorithms"] = list(self.algorithms)
        d["sweep"] = {"epsilon": [float(e) for e in self.sweep.epsilon],
                      "lam_c": [float(v) for v in self.sweep.lam_c]}
        return d

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise InvalidArgument(f"unknown config key(s): {sorted(extra)}")
        sections = {"instance": InstanceConfig, "penalty": PenaltyConfig, "sweep": SweepConfig}
        for key, typ in sections.items():
            sub = d.get(key) or {}
            if not isinstance(sub, dict):
                raise InvalidArgument(f"config section {key!r} must be a mapping")
            bad = set(sub) - {f.name for f in fields(typ)}
            if bad:
                raise InvalidArgument(f"unknown key(s) in {key}: {sorted(bad)}")
            if key == "sweep":
                sub = {k: tuple(_to_float(x, f"sweep.{k}") for x in _as_list(v)) for k, v in sub.items()}
            d[key] = typ(**_coerce(typ, sub, key + "."))
        if "algorithms" in d:
            d["algorithms"] = tuple(str(a) for a in _as_list(d["algorithms"]))
        return cls(**_coerce(cls, d))

    @classmethod
    def from_yaml(cls, text):
        return cls.from_dict(yaml.safe_load(text))

    @classmethod
    def load(cls, path):
        return cls.from_yaml(Path(path).read_text(encoding="utf-8"))

    def digest(self):
        """Short hash of everything that can change results (``out`` excluded)."""
        return hashlib.sha256(replace(self, out="").to_yaml().encode()).hexdigest()[:16]

    def override(self, key, value):
        """Copy with dotted ``key`` (e.g. ``sweep.epsilon``) set to ``value``."""
        return self.override_many([(key, value)])

    def override_many(self, pairs):
        """Apply several dotted overrides at once; validation sees only the end result."""
        d = self.to_dict()
        for key, value in pairs:
            parts = key.replace("-", "_").split(".")
            node = d
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise InvalidArgument(f"unknown config key {key!r}")
                node = node[p]
            if parts[-1] not in node or isinstance(node[parts[-1]], dict):
                raise InvalidArgument(f"unknown config key {key!r}")
            node[parts[-1]] = value
        return type(self).from_dict(d)


def _to_float(v, name):
    try:
        return float(v)
    except (TypeError, ValueError):
        raise InvalidArgument(f"{name}: expected a number, got {v!r}") from None


def _coerce(typ, d, prefix=""):
    """Cast scalar values to the declared field types (YAML reads ``1e-9`` as text)."""
    out = dict(d)
    for f in fields(typ):
        if f.name not in out or out[f.name] is None:
            continue
        v, name, kind = out[f.name], prefix + f.name, str(f.type)
        if kind in ("float", "Optional[float]"):
            out[f.name] = _to_float(v, name)
        elif kind in ("int", "Optional[int]"):
            if isinstance(v, bool) or float(_to_float(v, name)) != int(_to_float(v, name)):
                raise InvalidArgument(f"{name}: expected an integer, got {v!r}")
            out[f.name] = int(_to_float(v, name))
        elif kind == "bool":
            if isinstance(v, str) and v.lower() in ("true", "false"):
                v = v.lower() == "true"
            if not isinstance(v, bool):
                raise InvalidArgument(f"{name}: expected true/false, got {v!r}")
            out[f.name] = v
        elif kind in ("str", "Optional[str]"):
            out[f.name] = str(v)
    return out


def _as_list(v):
    if v is None:
        return []
    if isinstance(v, str):
        return [s.strip() for s in v.split(",") if s.strip()]
    if isinstance(v, (list, tuple)):
        return list(v)
    return [v]


@dataclass
class Instance:
    base: object
    problems: dict          # lam_c -> RobustProblem
    theta0: np.ndarray


@dataclass
class CellResult:
    epsilon: float
    lam_c: float
    algorithm: str
    trace: Optional[RunTrace]
    error: Optional[str] = None

    @property
    def failed(self):
        return self.error is not None or (self.trace is not None and self.trace.error is not None)

    @property
    def message(self):
        return self.error or (self.trace.error if self.trace else None)


def build_instance(cfg: ExperimentConfig) -> Instance:
    ic = cfg.instance
    seed = cfg.seed if ic.seed is None else ic.seed
    if ic.source == "credit_csv":
        base = ingest_credit_csv(ic.path, CreditSchema(target=ic.target, box_bound=ic.box_bound))
    else:
        if ic.kind != "logistic-gaussian":
            raise InvalidArgument("experiments need labelled data: use kind 'logistic-gaussian'")
        base = synth_instance(ic.kind, ic.dim, ic.n, seed, box_bound=ic.box_bound).base
    problems = {lam: credit_problem(base, ic.box_bound, ic.ridge, lam, cfg.penalty.lam_a,
                                    ic.theta_radius)
                for lam in cfg.lam_values}
    theta0 = np.zeros(base.dim)
    if cfg.theta0 == "static":
        prob = problems[cfg.lam_values[0]]
        env = make_env(base, prob.sample_space, ShiftMap.identity(), seed)
        fit_cfg = RrmConfig(outer_iters=1, inner=_inner_cfg(cfg), argmin_tol=cfg.argmin_tol,
                            argmin_max_iters=cfg.argmin_max_iters)
        trace = run("static", prob, env, theta0, fit_cfg)
        if trace.error:
            raise DrppError(f"static fit for theta0 failed: {trace.error}")
        theta0 = trace.final_theta
    return Instance(base, problems, theta0)


def _inner_cfg(cfg):
    return InnerSolveConfig(inner_tol=cfg.inner_tol, max_ascent_iters=cfg.max_ascent_iters)


def _rrm_cfg(cfg, seed):
    return RrmConfig(outer_iters=cfg.outer_iters, inner=_inner_cfg(cfg), argmin_tol=cfg.argmin_tol,
                     argmin_max_iters=cfg.argmin_max_iters, batch_size=cfg.batch_size, seed=seed)


def _rgd_cfg(cfg, seed):
    return RgdConfig(outer_iters=cfg.outer_iters, eta=cfg.eta, inner=_inner_cfg(cfg),
                     batch_size=cfg.batch_size, seed=seed)


def cells(cfg: ExperimentConfig):
    """Every (lam_c, epsilon, algorithm) cell, in output order."""
    return [(lam, float(e), a) for lam in cfg.lam_values for e in cfg.sweep.epsilon
            for a in cfg.algorithms]


def run_cell(cfg: ExperimentConfig, inst: Instance, lam_c, epsilon, algorithm) -> CellResult:
    try:
        prob: RobustProblem = inst.problems[lam_c]
        eff = cfg.epsilon_scale * epsilon
        env0 = make_env(inst.base, prob.sample_space, ShiftMap.linear(eff, cfg.compounding), cfg.seed)
        gd = algorithm in ("rgd", "pp_rgd")
        acfg = _rgd_cfg(cfg, cfg.seed) if gd else _rrm_cfg(cfg, cfg.seed)
        trace = run(algorithm, prob, env0, inst.theta0, acfg, ledger=prob.ledger(eff))
        return CellResult(epsilon, lam_c, algorithm, trace)
    except Exception as exc:  # noqa: BLE001 - one broken cell must not sink the sweep
        return CellResult(epsilon, lam_c, algorithm, None, f"{type(exc).__name__}: {exc}")


def execute(cfg: ExperimentConfig, threads=1, inst: Instance = None):
    """Run every cell; results come back in ``cells(cfg)`` order whatever ``threads`` is."""
    inst = inst or build_instance(cfg)
    todo = cells(cfg)
    if threads <= 1:
        results = [run_cell(cfg, inst, *c) for c in todo]
    else:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            results = list(pool.map(lambda c: run_cell(cfg, inst, *c), todo))
    return inst, results


@dataclass
class ExperimentResult:
    out: Path
    results: list

    @property
    def failed(self):
        return [r for r in self.results if r.failed]

    @property
    def ok(self):
        return not self.failed


def run_experiment(cfg: ExperimentConfig, threads=1, out=None) -> ExperimentResult:
    """Run the sweep and write every artifact into ``out`` (default ``cfg.out``)."""
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    inst, results = execute(cfg, threads)
    write_artifacts(cfg, inst, results, out)
    return ExperimentResult(out, results)


def _scale(theta0, mask):
    s = float(np.linalg.norm(np.asarray(theta0)[mask]))
    return 1.0 / s if s > 0 else math.nan


def _num(x):
    return None if isinstance(x, float) and math.isnan(x) else x


def write_artifacts(cfg, inst, results, out: Path):
    digest = cfg.digest()
    c = _scale(inst.theta0, inst.base.strategic_mask)
    primary = cfg.lam_values[0]
    T = cfg.outer_iters

    with open(out / "run_log.jsonl", "w", encoding="utf-8") as log:
        for r in results:
            if r.trace is None:
                continue
            for rec in r.trace.records:
                row = dict(
                    config_hash=digest, epsilon=r.epsilon, epsilon_effective=cfg.epsilon_scale * r.epsilon,
                    lam_c=r.lam_c, algorithm=r.algorithm, iteration=rec.t + 1,
                    theta=[float(v) for v in rec.theta], param_gap=rec.param_gap,
                    param_gap_scaled=rec.param_gap * c, robust_risk=rec.robust_risk,
                    plain_loss=rec.plain_loss, accuracy=rec.accuracy, detection_rate=rec.detection_rate,
                    fit_robust_risk=rec.fit_robust_risk, fit_plain_loss=rec.fit_plain_loss,
                    fit_accuracy=rec.fit_accuracy, fit_detection_rate=rec.fit_detection_rate,
                    inner_gap_max=rec.inner_gap_max, inner_iters_mean=rec.inner_iters_mean,
                    argmin_iters=rec.argmin_iters, clamped=rec.clamped,
                    stop_reason=r.trace.stop_reason if rec is r.trace.records[-1] else "",
                    flags=list(r.trace.flags), wall_time=rec.wall_time)
                assert tuple(row) == RUN_LOG_FIELDS
                log.write(json.dumps({k: _num(v) for k, v in row.items()}) + "\n")

    def primary_cells():
        return [r for r in results if r.lam_c == primary and r.trace is not None]

    with _csv(out / "trajectories.csv", TRAJECTORY_COLUMNS) as w:
        for r in primary_cells():
            tr = r.trace
            w.writerow([r.epsilon, r.algorithm, 0, "", "", tr.initial["robust_risk"],
                        tr.initial["plain_loss"], tr.initial["accuracy"], tr.initial["detection_rate"]])
            for rec in tr.records:
                w.writerow([r.epsilon, r.algorithm, rec.t + 1, rec.param_gap, rec.param_gap * c,
                            rec.robust_risk, rec.plain_loss, rec.accuracy, rec.detection_rate])

    with _csv(out / "phase_metrics.csv", PHASE_COLUMNS) as w:
        for r in primary_cells():
            for rec in r.trace.records:
                w.writerow([r.epsilon, r.algorithm, rec.t + 1, "pre", rec.fit_robust_risk,
                            rec.fit_plain_loss, rec.fit_accuracy, rec.fit_detection_rate])
                w.writerow([r.epsilon, r.algorithm, rec.t + 1, "post", rec.robust_risk,
                            rec.plain_loss, rec.accuracy, rec.detection_rate])

    with _csv(out / "detection_vs_epsilon.csv", DETECTION_EPS_COLUMNS) as w:
        for r in primary_cells():
            if r.algorithm not in METHOD_NAMES or not r.trace.records:
                continue
            for t in sorted({1, T}):
                w.writerow([r.epsilon, METHOD_NAMES[r.algorithm], t, detection_at(r.trace, t)])

    with _csv(out / "detection_vs_lambda.csv", DETECTION_LAM_COLUMNS) as w:
        for r in results:
            if r.trace is None or r.algorithm not in ("rrm", "rgd"):
                continue
            for rec in r.trace.records:
                w.writerow([r.lam_c, r.epsilon, r.algorithm, rec.t + 1, rec.detection_rate])

    (out / "constants.txt").write_text(constants_text(cfg, inst), encoding="utf-8")

    with _csv(out / "summary.csv", SUMMARY_COLUMNS) as w:
        for r in results:
            tr = r.trace
            last = tr.records[-1] if tr is not None and tr.records else None
            w.writerow([r.epsilon, r.lam_c, r.algorithm, "error" if r.failed else "ok",
                        tr.stop_reason if tr else "error", len(tr.records) if tr else 0,
                        last.param_gap if last else "", last.robust_risk if last else "",
                        last.accuracy if last else "", last.detection_rate if last else "",
                        ";".join(tr.flags) if tr else "", r.message or ""])

    failed = [r for r in results if r.failed]
    err_path = out / "errors.jsonl"
    if failed:
        with open(err_path, "w", encoding="utf-8") as fh:
            for r in failed:
                fh.write(json.dumps(dict(epsilon=r.epsilon, lam_c=r.lam_c, algorithm=r.algorithm,
                                         error=r.message)) + "\n")
    elif err_path.exists():
        err_path.unlink()


def detection_at(trace: RunTrace, t):
    """Detection rate after round ``t`` (1-based); an early-stopped run keeps its last value."""
    recs = trace.records
    return recs[min(t, len(recs)) - 1].detection_rate


def constants_text(cfg: ExperimentConfig, inst: Instance):
    prob = inst.problems[cfg.lam_values[0]]
    parts = [f"# config {cfg.digest()}  lam_c = {cfg.lam_values[0]!r}\n"]
    for e in cfg.sweep.epsilon:
        eff = cfg.epsilon_scale * float(e)
        parts.append(f"\n[epsilon = {float(e)!r}]\n")
        try:
            rep = compute_constants(prob.ledger(eff), inner_tol=cfg.inner_tol, eta=cfg.eta)
            parts.append(rep.to_text())
            flags = rep.flags
            parts.append(f"# flags: {', '.join(flags) if flags else 'none'}\n")
        except DrppError as exc:
            parts.append(f"# unavailable: {exc}\n")
    return "".join(parts)


class _csv:
    def __init__(self, path, header):
        self.path, self.header = path, header

    def __enter__(self):
        self.fh = open(self.path, "w", newline="", encoding="utf-8")
        w = csv.writer(self.fh, lineterminator="\n")
        w.writerow(self.header)
        return w

    def __exit__(self, *exc):
        self.fh.close()
