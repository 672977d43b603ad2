"""Outer retraining loops: robust repeated risk minimization and repeated
gradient descent, plus the non-robust and static baselines."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import metrics
from .core import RegularityLedger, RobustProblem, transport_cost
from .env import EnvState, deploy, draw_batch
from .errors import ConvexityViolation, DrppError, InvalidArgument, NonConvergence
from .inner import InnerSolveConfig, danskin_grad, solve_inner

ALGORITHMS = ("rrm", "rgd", "pp_rrm", "pp_rgd", "static")
NUMERICALLY_ZERO = 1e-12


@dataclass(frozen=True)
class RrmConfig:
    outer_iters: int = 20
    inner: InnerSolveConfig = field(default_factory=InnerSolveConfig)
    argmin_tol: float = 1e-10
    argmin_max_iters: int = 200_000
    batch_size: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.outer_iters < 1:
            raise InvalidArgument("outer_iters must be >= 1")
        if not self.argmin_tol > 0:
            raise InvalidArgument("argmin_tol must be positive")


@dataclass(frozen=True)
class RgdConfig:
    outer_iters: int = 20
    eta: float = 1e-2
    inner: InnerSolveConfig = field(default_factory=InnerSolveConfig)
    batch_size: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.outer_iters < 1:
            raise InvalidArgument("outer_iters must be >= 1")
        if self.eta < 0:
            raise InvalidArgument("eta must be nonnegative")


@dataclass
class StepInfo:
    inner_gap_max: float = 0.0
    inner_iters_mean: float = 0.0
    argmin_iters: int = 0
    argmin_gap: float = 0.0
    z: Optional[np.ndarray] = None


@dataclass
class IterationRecord:
    t: int
    theta: np.ndarray
    param_gap: float
    robust_risk: float
    plain_loss: float
    accuracy: float
    detection_rate: float
    fit_robust_risk: float
    fit_plain_loss: float
    fit_accuracy: float
    fit_detection_rate: float
    inner_gap_max: float
    inner_iters_mean: float
    argmin_iters: int
    clamped: int
    wall_time: float


@dataclass
class RunTrace:
    algorithm: str
    theta0: np.ndarray
    initial: dict
    records: list = field(default_factory=list)
    stop_reason: str = "max_iters"
    flags: list = field(default_factory=list)
    error: Optional[str] = None

    @property
    def final_theta(self):
        return self.records[-1].theta if self.records else self.theta0

    @property
    def gaps(self):
        return np.array([r.param_gap for r in self.records])

    @property
    def thetas(self):
        return np.array([self.theta0] + [r.theta for r in self.records])


def _batch(env, batch_size, seed):
    if batch_size is None or batch_size >= len(env):
        return draw_batch(env, full_batch=True)
    return draw_batch(env, batch_size, seed)


def minimize_frozen(problem: RobustProblem, xi, z, label, theta_start, tol=1e-10,
                    max_iters=200_000):
    """argmin over Theta of mean_i l(theta, z_i) - lambda(theta) c(xi_i, z_i), z held fixed.

    Projected gradient descent with step 1/L, started at ``theta_start``; stops
    at the first iterate whose gradient-mapping norm is <= ``tol`` and returns
    that iterate, so an already-optimal start comes back unchanged.
    """
    loss, pen, space = problem.loss, problem.penalty, problem.param_space
    xi = np.atleast_2d(xi)
    z = np.atleast_2d(z)
    cbar = float(np.mean(transport_cost(xi, z, problem.sample_space.mask)))
    H = 2.0 * pen.a
    curv = loss.constants(problem.sample_space, problem.param_space).gamma_loss - H * cbar
    if not curv > 0:
        raise ConvexityViolation(
            f"frozen objective not certifiably strongly convex (gamma_loss - H_lam * c = {curv:.3g})")
    L = loss.theta_smoothness(z) + H * cbar
    theta = space.project(theta_start)
    n = z.shape[0]
    gap = math.inf
    for k in range(max_iters + 1):
        g = np.einsum("ni->i", loss.grad_theta(theta, z, label)) / n - pen.grad(theta) * cbar
        nxt = space.project(theta - g / L)
        gap = L * float(np.linalg.norm(nxt - theta))
        if gap <= tol:
            return theta, k, gap
        theta = nxt
    raise NonConvergence(f"argmin did not reach tol {tol} in {max_iters} iterations "
                         f"(gap {gap:.3g})", best=theta, gap=gap)


def _inner(problem, theta, X, y, inner_cfg, robust, start=None):
    if not robust:
        return X, 0.0, 0.0
    sol = solve_inner(problem, theta, X, y, inner_cfg, start=start)
    return sol.z, float(np.max(sol.certified_gap)), float(np.mean(sol.ascent_iters_used))


def rrm_step(problem: RobustProblem, env: EnvState, theta_t, cfg: RrmConfig, robust=True,
             start=None):
    """One robust repeated-risk-minimization update; returns (theta_next, StepInfo)."""
    theta_t = np.asarray(theta_t, float)
    X, y = _batch(env, cfg.batch_size, cfg.seed)
    z, gmax, imean = _inner(problem, theta_t, X, y, cfg.inner, robust, start)
    theta, k, gap = minimize_frozen(problem, X, z, y, theta_t, cfg.argmin_tol, cfg.argmin_max_iters)
    return theta, StepInfo(gmax, imean, k, gap, z)


def rgd_step(problem: RobustProblem, env: EnvState, theta_t, cfg: RgdConfig, robust=True,
             start=None):
    """One robust repeated-gradient-descent update; returns (theta_next, StepInfo)."""
    theta_t = np.asarray(theta_t, float)
    X, y = _batch(env, cfg.batch_size, cfg.seed)
    z, gmax, imean = _inner(problem, theta_t, X, y, cfg.inner, robust, start)
    g = danskin_grad(problem, theta_t, X, z, y)
    g = np.einsum("ni->i", np.atleast_2d(g)) / np.atleast_2d(g).shape[0]
    theta = problem.param_space.project(theta_t - cfg.eta * g)
    return theta, StepInfo(gmax, imean, 0, 0.0, z)


def evaluate(problem: RobustProblem, theta, X, y, inner_cfg: InnerSolveConfig):
    """Batch metrics of ``theta`` on samples ``(X, y)``."""
    out = {"plain_loss": float(np.mean(problem.loss.value(theta, X, y)))}
    try:
        sol = solve_inner(problem, theta, X, y, inner_cfg)
        out["robust_risk"] = float(np.mean(sol.phi_value))
    except DrppError:
        out["robust_risk"] = math.nan
    if y is not None and problem.loss.is_logistic:
        out["accuracy"] = metrics.accuracy(theta, X, y)
        out["detection_rate"] = metrics.detection_rate(theta, X, y)
    else:
        out["accuracy"] = math.nan
        out["detection_rate"] = math.nan
    return out


def _eta_flag(problem, cfg, ledger):
    from .analysis import compute_constants

    try:
        rep = compute_constants(ledger, inner_tol=cfg.inner.inner_tol, eta=cfg.eta)
    except DrppError:
        return "eta_bound_unavailable"
    if not (cfg.eta <= rep.eta_bound):
        return "eta_exceeds_bound"
    return None


def run(algorithm: str, problem: RobustProblem, env0: EnvState, theta0, cfg,
        ledger: Optional[RegularityLedger] = None, eval_inner: InnerSolveConfig = None) -> RunTrace:
    """Alternate deployment and retraining for ``cfg.outer_iters`` rounds.

    ``rrm``/``rgd`` are the robust loops; ``pp_*`` skip the inner maximization
    (z = xi); ``static`` fits once on ``env0`` without robustness and is then
    deployed unchanged. The loop stops early once the parameter gap is
    numerically zero. Errors end the run and are stored on the trace.
    """
    if algorithm not in ALGORITHMS:
        raise InvalidArgument(f"unknown algorithm {algorithm!r}")
    theta0 = problem.param_space.project(np.asarray(theta0, float))
    robust = algorithm in ("rrm", "rgd")
    gd = algorithm in ("rgd", "pp_rgd")
    eval_inner = eval_inner or cfg.inner
    env = deploy(env0, theta0)
    trace = RunTrace(algorithm, theta0, evaluate(problem, theta0, env.X, env.y, eval_inner))
    if gd and ledger is not None:
        flag = _eta_flag(problem, cfg, ledger)
        if flag:
            trace.flags.append(flag)

    if algorithm == "static":
        return _run_static(problem, env0, theta0, cfg, eval_inner, trace)

    step = rgd_step if gd else rrm_step
    theta = theta0
    prev_z = None
    try:
        for t in range(cfg.outer_iters):
            t0 = time.perf_counter()
            start = prev_z if (cfg.inner.warm_start and cfg.batch_size is None) else None
            fit_env = env
            nxt, info = step(problem, env, theta, cfg, robust=robust, start=start)
            prev_z = info.z if robust else None
            gap = float(np.linalg.norm(nxt - theta))
            env = deploy(env, nxt)
            fit = evaluate(problem, nxt, fit_env.X, fit_env.y, eval_inner)
            post = evaluate(problem, nxt, env.X, env.y, eval_inner)
            trace.records.append(IterationRecord(
                t=t, theta=nxt, param_gap=gap,
                robust_risk=post["robust_risk"], plain_loss=post["plain_loss"],
                accuracy=post["accuracy"], detection_rate=post["detection_rate"],
                fit_robust_risk=fit["robust_risk"], fit_plain_loss=fit["plain_loss"],
                fit_accuracy=fit["accuracy"], fit_detection_rate=fit["detection_rate"],
                inner_gap_max=info.inner_gap_max, inner_iters_mean=info.inner_iters_mean,
                argmin_iters=info.argmin_iters, clamped=env.clamped,
                wall_time=time.perf_counter() - t0))
            theta = nxt
            if gap <= NUMERICALLY_ZERO:
                trace.stop_reason = "numerically zero"
                break
    except DrppError as exc:
        trace.error = f"{type(exc).__name__}: {exc}"
        trace.stop_reason = "error"
    return _flag_undefined_detection(problem, trace)


def _flag_undefined_detection(problem, trace):
    if problem.loss.is_logistic and any(math.isnan(r.detection_rate) for r in trace.records):
        trace.flags.append("detection_rate_undefined")
    return trace


def _run_static(problem, env0, theta0, cfg, eval_inner, trace):
    t0 = time.perf_counter()
    try:
        X, y = env0.X, env0.y
        argmin_tol = getattr(cfg, "argmin_tol", 1e-10)
        max_iters = getattr(cfg, "argmin_max_iters", 200_000)
        theta, k, _ = minimize_frozen(problem, X, X, y, theta0, argmin_tol, max_iters)
    except DrppError as exc:
        trace.error = f"{type(exc).__name__}: {exc}"
        trace.stop_reason = "error"
        return trace
    env = deploy(env0, theta)
    post = evaluate(problem, theta, env.X, env.y, eval_inner)
    fit = evaluate(problem, theta, env0.X, env0.y, eval_inner)
    wall = time.perf_counter() - t0
    for t in range(cfg.outer_iters):
        gap = float(np.linalg.norm(theta - theta0)) if t == 0 else 0.0
        trace.records.append(IterationRecord(
            t=t, theta=theta, param_gap=gap,
            robust_risk=post["robust_risk"], plain_loss=post["plain_loss"],
            accuracy=post["accuracy"], detection_rate=post["detection_rate"],
            fit_robust_risk=fit["robust_risk"], fit_plain_loss=fit["plain_loss"],
            fit_accuracy=fit["accuracy"], fit_detection_rate=fit["detection_rate"],
            inner_gap_max=0.0, inner_iters_mean=0.0, argmin_iters=k if t == 0 else 0,
            clamped=env.clamped, wall_time=wall if t == 0 else 0.0))
    trace.stop_reason = "static"
    return _flag_undefined_detection(problem, trace)
