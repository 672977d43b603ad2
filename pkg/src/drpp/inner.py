"""Robust surrogate phi, its inner maximizer, f, and the envelope gradient."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import RobustProblem, project_sample, transport_cost
from .errors import ConcavityViolation, InvalidArgument, NonConvergence


@dataclass(frozen=True)
class InnerSolveConfig:
    """Settings for the projected-ascent inner solver.

    ``inner_tol`` bounds the certified distance to the exact maximizer.
    ``step_rule`` is ``"lipschitz"`` (step 1/L) or ``"fixed"`` with ``step``.
    """

    inner_tol: float = 1e-9
    max_ascent_iters: int = 10_000
    step_rule: str = "lipschitz"
    step: Optional[float] = None
    warm_start: bool = False

    def __post_init__(self):
        if not self.inner_tol > 0:
            raise InvalidArgument("inner_tol must be positive")
        if self.max_ascent_iters < 1:
            raise InvalidArgument("max_ascent_iters must be >= 1")
        if self.step_rule not in ("lipschitz", "fixed"):
            raise InvalidArgument(f"unknown step rule {self.step_rule!r}")
        if self.step_rule == "fixed" and not (self.step and self.step > 0):
            raise InvalidArgument("fixed step rule needs a positive step")


@dataclass(frozen=True)
class InnerSolution:
    z: np.ndarray
    phi_value: np.ndarray
    certified_gap: np.ndarray
    ascent_iters_used: np.ndarray
    inner_tol: float

    @property
    def converged(self):
        return bool(np.all(self.certified_gap <= self.inner_tol))

    @property
    def max_gap(self):
        return float(np.max(self.certified_gap))


def phi(problem: RobustProblem, theta, xi, zeta, label=None):
    """l(theta, zeta) - lambda(theta) c(xi, zeta)."""
    xi = np.asarray(xi, float)
    zeta = np.asarray(zeta, float)
    if xi.shape != zeta.shape:
        raise InvalidArgument(f"xi shape {xi.shape} != zeta shape {zeta.shape}")
    cost = transport_cost(xi, zeta, problem.sample_space.mask)
    return problem.loss.value(theta, zeta, label) - problem.penalty.value(theta) * cost


def grad_phi_zeta(problem: RobustProblem, theta, xi, zeta, label=None):
    lam = problem.penalty.value(theta)
    g = problem.loss.grad_zeta(theta, zeta, label) - 2.0 * lam * (np.asarray(zeta) - xi)
    return g * problem.sample_space.mask


def grad_phi_theta(problem: RobustProblem, theta, xi, zeta, label=None):
    cost = transport_cost(xi, zeta, problem.sample_space.mask)
    gl = problem.loss.grad_theta(theta, zeta, label)
    return gl - np.multiply.outer(cost, problem.penalty.grad(theta))


def _curvature(problem, theta):
    lam = problem.penalty.value(theta)
    upper, lower = problem.loss.zeta_curvature(theta, problem.sample_space.mask)
    return 2.0 * lam - upper, 2.0 * lam - lower, lam


def solve_inner(problem: RobustProblem, theta, xi, label=None, cfg: InnerSolveConfig = None,
                start=None, history: Optional[list] = None) -> InnerSolution:
    """Projected gradient ascent on zeta -> phi(theta, xi, zeta) over the sample box.

    Works on one sample ``(d,)`` or a batch ``(n, d)``; every sample is solved
    independently. Iteration stops per sample once the strong-concavity bound
    on the distance to the maximizer drops below ``cfg.inner_tol``.
    """
    cfg = cfg or InnerSolveConfig()
    theta = np.asarray(theta, float)
    xi = np.asarray(xi, float)
    single = xi.ndim == 1
    X = np.atleast_2d(xi)
    n = X.shape[0]
    y = None
    if label is not None:
        y = np.broadcast_to(np.asarray(label, float), (n,))
    space = problem.sample_space

    mu, L, lam = _curvature(problem, theta)
    if not mu > 0:
        raise ConcavityViolation(
            f"phi is not strongly concave in zeta at this theta (mu = {mu:.6g}); "
            "raise the penalty or shrink the parameter set")
    step = 1.0 / L if cfg.step_rule == "lipschitz" else cfg.step
    if step > 1.0 / L * (1 + 1e-12):
        raise InvalidArgument(f"fixed step {step} exceeds 1/L = {1.0 / L}")
    shrink = math.sqrt(max(0.0, 1.0 - mu * step))

    if problem.loss.kind == "linear-synthetic":
        # separable concave quadratic over a box: clamping the stationary point is exact
        z = project_sample(space, X + theta / (2.0 * lam), reference=X)
        gap = np.zeros(n)
        iters = np.ones(n, dtype=int)
    else:
        z = X.copy() if start is None else project_sample(space, np.atleast_2d(start), reference=X)
        gap = np.full(n, np.inf)
        iters = np.zeros(n, dtype=int)
        active = np.arange(n)
        for _ in range(cfg.max_ascent_iters):
            za = z[active]
            ya = None if y is None else y[active]
            g = grad_phi_zeta(problem, theta, X[active], za, ya)
            zn = project_sample(space, za + step * g, reference=X[active])
            gm = np.linalg.norm(zn - za, axis=1) / step
            ga = shrink * 2.0 * gm / mu
            z[active] = zn
            gap[active] = ga
            iters[active] += 1
            if history is not None:
                history.append(z.copy())
            active = active[ga > cfg.inner_tol]
            if active.size == 0:
                break
        else:
            best = z[0] if single else z
            raise NonConvergence(
                f"inner ascent did not reach tol {cfg.inner_tol} in {cfg.max_ascent_iters} "
                f"iterations (worst gap {gap.max():.3g})", best=best, gap=float(gap.max()))

    val = phi(problem, theta, X, z, y)
    if single:
        return InnerSolution(z[0], float(val[0]), float(gap[0]), int(iters[0]), cfg.inner_tol)
    return InnerSolution(z, val, gap, iters, cfg.inner_tol)


def surrogate_f(problem: RobustProblem, theta, xi, label=None, cfg: InnerSolveConfig = None):
    """f(theta, xi) = max over the box of phi; batched like solve_inner."""
    return solve_inner(problem, theta, xi, label, cfg).phi_value


def danskin_grad(problem: RobustProblem, theta, xi, solution, label=None):
    """Envelope gradient grad_theta l(theta, z) - grad lambda(theta) c(xi, z).

    ``solution`` is an InnerSolution (its certificate is checked) or a raw z.
    """
    if isinstance(solution, InnerSolution):
        if not solution.converged:
            raise InvalidArgument(
                f"inner solution not certified (gap {solution.max_gap:.3g} > {solution.inner_tol})")
        z = solution.z
    else:
        z = np.asarray(solution, float)
    return grad_phi_theta(problem, theta, xi, z, label)
