"""Self-checks on the synthetic instances, each against an independent oracle.

Used by ``drpp validate <kind>``; every check returns (name, passed, detail).
"""
from __future__ import annotations

import numpy as np

from .algorithms import RgdConfig, RrmConfig, run
from .analysis import compute_constants, wasserstein1_exact
from .data import synth_instance
from .env import ShiftMap, deploy, make_env
from .inner import InnerSolveConfig, danskin_grad, solve_inner, surrogate_f

TIGHT = InnerSolveConfig(inner_tol=1e-12, max_ascent_iters=100_000)


def _check(name, err, tol):
    return name, bool(err <= tol), f"error {err:.3g} (tol {tol:g})"


def check_danskin(problem, X, y, rng, n_points=5, h=1e-5, tol=1e-4):
    """Envelope gradient of mean f against central differences."""
    worst = 0.0
    d = problem.param_space.center.size if problem.param_space.kind == "ball" else X.shape[1]
    for _ in range(n_points):
        theta = problem.param_space.project(rng.uniform(-1, 1, size=d))
        sol = solve_inner(problem, theta, X, y, TIGHT)
        g = np.mean(np.atleast_2d(danskin_grad(problem, theta, X, sol, y)), axis=0)
        fd = np.empty(d)
        for i in range(d):
            e = np.zeros(d)
            e[i] = h
            fp = np.mean(surrogate_f(problem, theta + e, X, y, TIGHT))
            fm = np.mean(surrogate_f(problem, theta - e, X, y, TIGHT))
            fd[i] = (fp - fm) / (2 * h)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))
    return _check("danskin gradient vs finite differences", worst, tol)


def check_w1(base, space, rng, eps=0.7, n=64, pairs=5):
    """Exact-assignment W1 between two deployments equals eps |dtheta^S| when unclamped."""
    sub = type(base)(base.X[:n], None if base.y is None else base.y[:n], base.feature_names,
                     base.strategic_mask)
    env = make_env(sub, space, ShiftMap.linear(eps))
    mask = sub.strategic_mask
    worst = 0.0
    for _ in range(pairs):
        a, b = rng.uniform(-0.5, 0.5, size=(2, sub.dim))
        ea, eb = deploy(env, a), deploy(env, b)
        if ea.clamped or eb.clamped:
            continue
        w = wasserstein1_exact(ea.X, eb.X)
        worst = max(worst, abs(w - eps * np.linalg.norm((a - b)[mask])))
    return _check("W1 sensitivity certificate", worst, 1e-9)


def _closed_form_checks(kind, seed):
    inst = synth_instance(kind, 2, 32, seed)
    prob, dflt = inst.problem, inst.defaults
    rng = np.random.default_rng(seed)
    X = inst.base.X
    out = []

    theta = rng.uniform(-1, 1, size=2)
    sol = solve_inner(prob, theta, X, None, TIGHT)
    out.append(_check("inner maximizer vs closed form",
                      float(np.max(np.abs(sol.z - dflt["inner_closed_form"](theta, X)))), 1e-8))
    out.append(_check("f vs closed form",
                      float(np.max(np.abs(sol.phi_value - dflt["f_closed_form"](theta, X)))), 1e-8))
    out.append(check_danskin(prob, X, None, rng))
    out.append(check_w1(inst.base, prob.sample_space, rng))

    eps = 0.3 if kind == "quadratic" else 0.2
    env0 = make_env(inst.base, prob.sample_space, ShiftMap.linear(eps))
    theta_s = dflt["stable_point"](eps)
    rrm = run("rrm", prob, env0, np.zeros(2), RrmConfig(outer_iters=200, inner=TIGHT, argmin_tol=1e-13))
    out.append(_check("RRM limit vs closed-form stable point",
                      float(np.linalg.norm(rrm.final_theta - theta_s)), 1e-8))
    if kind == "quadratic":
        rep = compute_constants(prob.ledger(eps))
        errs = np.linalg.norm(rrm.thetas - theta_s, axis=1)
        ratios = [errs[t + 1] / errs[t] for t in range(1, len(errs) - 1) if errs[t] > 1e-9]
        worst = max(ratios) - rep.kappa_rm if ratios else 0.0
        out.append(_check("RRM contraction within kappa_rm", worst, 0.05))
    else:
        rgd = run("rgd", prob, env0, np.zeros(2), RgdConfig(outer_iters=2000, eta=0.5, inner=TIGHT))
        out.append(_check("RGD and RRM limits agree",
                          float(np.linalg.norm(rgd.final_theta - rrm.final_theta)), 1e-6))
    return out


def _logistic_checks(seed):
    inst = synth_instance("logistic-gaussian", 1, 16, seed, box_bound=3.0)
    prob = inst.problem
    rng = np.random.default_rng(seed)
    X, y = inst.base.X, inst.base.y
    out = []
    theta = prob.param_space.project(rng.uniform(-2, 2, size=2))
    sol = solve_inner(prob, theta, X, y, TIGHT)
    grid = np.arange(-3.0, 3.0 + 5e-5, 1e-4)
    zerr = ferr = 0.0
    for i in range(X.shape[0]):
        Z = np.column_stack([grid, np.ones_like(grid)])
        vals = prob.loss.value(theta, Z, y[i]) - prob.penalty.value(theta) * (grid - X[i, 0]) ** 2
        k = int(np.argmax(vals))
        zerr = max(zerr, abs(sol.z[i, 0] - grid[k]))
        ferr = max(ferr, vals[k] - sol.phi_value[i])
    out.append(_check("inner maximizer vs grid search", zerr, 2e-3))
    out.append(_check("f vs grid search (grid never better)", ferr, 1e-6))
    out.append(check_danskin(prob, X, y, rng))
    big = synth_instance("logistic-gaussian", 4, 64, seed)
    out.append(check_w1(big.base, big.problem.sample_space, rng))
    return out


def run_validation(kind, seed=0):
    if kind == "logistic-gaussian":
        return _logistic_checks(seed)
    return _closed_form_checks(kind, seed)
