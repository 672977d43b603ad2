"""Acceptance suite: one test per criterion, each with its tolerance and time budget.

The terminal summary prints an ``AC<n> PASS/FAIL`` line per criterion
(see conftest.py).
"""
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from drpp import (ConstantsReport, InnerSolveConfig, LossModel, ParamSpace, PenaltyFunction, RegularityLedger,
                  RgdConfig, RobustProblem, RrmConfig, SampleSpace, ShiftMap, compute_constants,
                  danskin_grad, deploy, dpr, make_env, run, solve_inner, surrogate_f, synth_instance,
                  wasserstein1_exact)
from drpp.experiment import ExperimentConfig, detection_at, execute
from oracles import GOLDEN_LEDGER, performative_risk_grid

ROOT = Path(__file__).resolve().parents[1]
CREDIT_CONFIG = ROOT / "configs" / "credit.yaml"
TIGHT = InnerSolveConfig(inner_tol=1e-12, max_ascent_iters=100_000)


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f} s, budget {self.seconds} s"


def read_golden(path):
    out = {}
    for line in path.read_text().splitlines():
        if line.startswith("#"):
            continue
        k, _, v = line.partition("=")
        out[k.strip()] = float(v)
    return out


@pytest.mark.criterion(1, "constants golden test (<= 2 ulp), < 1 s")
def test_ac1_constants_golden(data_dir):
    golden = read_golden(data_dir / "constants_golden.txt")
    with Budget(1.0):
        rep = compute_constants(RegularityLedger(**{k: float(v) for k, v in GOLDEN_LEDGER.items()}),
                                inner_tol=1e-3, eta=1e-2)
    inputs = {"epsilon_sens", "inner_tol", "eta"}
    assert set(golden) == set(ConstantsReport.__dataclass_fields__) - inputs
    for k, want in golden.items():
        got = getattr(rep, k)
        assert abs(got - want) <= 2 * np.spacing(abs(want)), (k, got, want)


# --- AC2 -------------------------------------------------------------------

def _logistic_box_problem(d, lam_c=30.0):
    space = SampleSpace(np.full(d, -3.0), np.full(d, 3.0))
    return RobustProblem(LossModel.logistic(), PenaltyFunction.constant(lam_c), space,
                         ParamSpace.ball(np.zeros(d), 10.0))


def _phi_on(prob, theta, xi, y, Z):
    return prob.loss.value(theta, Z, y) - 30.0 * np.sum((Z - xi) ** 2, axis=-1)


def _grid_argmax(prob, theta, xi, y):
    d = xi.size
    if d == 1:
        g = np.arange(-30000, 30001) * 1e-4
        Z = g[:, None]
        vals = _phi_on(prob, theta, xi, y, Z)
        k = int(np.argmax(vals))
        return Z[k], vals[k]
    coarse = np.arange(-300, 301) * 1e-2
    G = np.stack(np.meshgrid(coarse, coarse, indexing="ij"), -1).reshape(-1, 2)
    c = G[int(np.argmax(_phi_on(prob, theta, xi, y, G)))]
    off = np.arange(-200, 201) * 1e-4
    F = np.stack(np.meshgrid(c[0] + off, c[1] + off, indexing="ij"), -1).reshape(-1, 2)
    F = np.clip(F, -3.0, 3.0)
    vals = _phi_on(prob, theta, xi, y, F)
    k = int(np.argmax(vals))
    return F[k], vals[k]


@pytest.mark.criterion(2, "inner solver vs dense grid search on 20+ logistic instances, < 30 s")
def test_ac2_inner_solver_matches_grid_search():
    rng = np.random.default_rng(2)
    zerr = ferr = 0.0
    n_instances = 0
    with Budget(30.0):
        for d in (1, 2):
            for _ in range(12):
                prob = _logistic_box_problem(d)
                theta = rng.normal(size=d)
                theta *= rng.uniform(1.0, 10.0) / np.linalg.norm(theta)
                xi = rng.uniform(-3, 3, size=(4, d))
                xi[0] = np.sign(theta) * 2.98  # near the wall, pushed outward by the gradient
                y = rng.integers(0, 2, size=4).astype(float)
                sol = solve_inner(prob, theta, xi, y, InnerSolveConfig(inner_tol=1e-9, max_ascent_iters=100_000))
                for i in range(4):
                    z_grid, f_grid = _grid_argmax(prob, theta, xi[i], y[i])
                    zerr = max(zerr, float(np.max(np.abs(sol.z[i] - z_grid))))
                    ferr = max(ferr, abs(float(sol.phi_value[i]) - float(f_grid)))
                n_instances += 1
    assert n_instances >= 20
    assert zerr <= 2e-3, zerr
    assert ferr <= 1e-6, ferr


@pytest.mark.criterion(3, "Danskin gradient vs central differences on 100 points, < 60 s")
def test_ac3_danskin_matches_finite_differences():
    rng = np.random.default_rng(3)
    cfg = InnerSolveConfig(inner_tol=1e-10, max_ascent_iters=100_000)
    h = 1e-5
    worst = 0.0
    with Budget(60.0):
        for k in range(100):
            inst = synth_instance("logistic-gaussian", 3, 16, k)
            prob, X, y = inst.problem, inst.base.X, inst.base.y
            theta = prob.param_space.project(rng.normal(scale=2.0, size=4))
            sol = solve_inner(prob, theta, X, y, cfg)
            g = np.mean(danskin_grad(prob, theta, X, sol, y), axis=0)
            fd = np.empty(4)
            for i in range(4):
                e = np.zeros(4)
                e[i] = h
                fd[i] = (np.mean(surrogate_f(prob, theta + e, X, y, cfg))
                         - np.mean(surrogate_f(prob, theta - e, X, y, cfg))) / (2 * h)
            worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(fd)))
    assert worst <= 1e-4, worst


# --- AC4 / AC5 -------------------------------------------------------------

def _half_kappa_instance():
    """2-D quadratic instance with epsilon chosen so that kappa_rm = 0.5."""
    inst = synth_instance("quadratic", 2, 32, 4)
    base_rep = compute_constants(inst.problem.ledger(0.0))
    eps = 0.5 * base_rep.gamma / base_rep.L_f_txi
    env = make_env(inst.base, inst.problem.sample_space, ShiftMap.linear(eps))
    return inst, eps, env


def _ratios(thetas, target, start=2, floor=1e-10):
    errs = np.linalg.norm(thetas - target, axis=1)
    return [errs[t + 1] / errs[t] for t in range(start, len(errs) - 1) if errs[t] > floor]


@pytest.mark.criterion(4, "RRM contraction within kappa_rm + 0.05 and residual within the neighborhood, < 10 s")
def test_ac4_rrm_contraction():
    with Budget(10.0):
        inst, eps, env = _half_kappa_instance()
        prob = inst.problem
        theta_s = inst.defaults["stable_point"](eps)
        theta0 = np.array([2.5, -2.5])
        rep = compute_constants(prob.ledger(eps))
        assert rep.kappa_rm == pytest.approx(0.5, rel=1e-12)

        tr = run("rrm", prob, env, theta0, RrmConfig(outer_iters=40, inner=TIGHT, argmin_tol=1e-13))
        ratios = _ratios(tr.thetas, theta_s)
        assert len(ratios) >= 5
        assert max(ratios) <= rep.kappa_rm + 0.05, max(ratios)

        for tol in (1e-3, 1e-6):
            rep_t = compute_constants(prob.ledger(eps), inner_tol=tol)
            cfg = RrmConfig(outer_iters=40, inner=InnerSolveConfig(inner_tol=tol), argmin_tol=1e-13)
            tr = run("rrm", prob, env, theta0, cfg)
            assert tr.error is None
            residual = np.linalg.norm(tr.final_theta - theta_s)
            assert residual <= rep_t.C_rm / (1 - rep_t.kappa_rm) + 1e-8, (tol, residual)


@pytest.mark.criterion(5, "RGD rate within kappa_gd + 0.05 at half eta_bound; 1.5 eta_bound flagged, < 10 s")
def test_ac5_rgd_contraction():
    with Budget(10.0):
        inst, eps, env = _half_kappa_instance()
        prob = inst.problem
        led = prob.ledger(eps)
        bound = compute_constants(led).eta_bound
        assert bound > 0
        eta = 0.5 * bound
        kappa_gd = compute_constants(led, eta=eta).kappa_gd
        assert kappa_gd < 1
        theta0 = np.array([2.5, -2.5])
        tr = run("rgd", prob, env, theta0, RgdConfig(outer_iters=80, eta=eta, inner=TIGHT), ledger=led)
        assert tr.flags == []
        ratios = _ratios(tr.thetas, inst.defaults["stable_point"](eps))
        assert len(ratios) >= 10
        assert max(ratios) <= kappa_gd + 0.05, max(ratios)

        big = run("rgd", prob, env, theta0, RgdConfig(outer_iters=30, eta=1.5 * bound, inner=TIGHT), ledger=led)
        assert big.error is None and len(big.records) >= 1
        assert "eta_exceeds_bound" in big.flags


# --- AC6 -------------------------------------------------------------------

def _grid_optimum(kind, X, eps, lam, ridge, bound=3.0):
    d = X.shape[1]
    if d == 1:
        g = np.arange(-30000, 30001) * 1e-4 * (bound / 3.0)
        T = g[:, None]
        return T[int(np.argmin(performative_risk_grid(kind, X, T, eps, lam, ridge)))]
    coarse = np.arange(-300, 301) * 1e-2
    G = np.stack(np.meshgrid(coarse, coarse, indexing="ij"), -1).reshape(-1, 2)
    c = G[int(np.argmin(performative_risk_grid(kind, X, G, eps, lam, ridge)))]
    off = np.arange(-200, 201) * 1e-4
    F = np.stack(np.meshgrid(c[0] + off, c[1] + off, indexing="ij"), -1).reshape(-1, 2)
    F = np.clip(F, -bound, bound)
    return F[int(np.argmin(performative_risk_grid(kind, X, F, eps, lam, ridge)))]


@pytest.mark.criterion(6, "suboptimality bounds with grid-searched optimum, < 2 min")
@pytest.mark.parametrize("kind", ["quadratic", "linear"])
@pytest.mark.parametrize("dim", [1, 2])
def test_ac6_suboptimality_bounds(kind, dim):
    with Budget(120.0):
        for eps in (0.1, 0.3):
            inst = synth_instance(kind, dim, 24, 6 + dim)
            prob, dflt = inst.problem, inst.defaults
            rep = compute_constants(prob.ledger(eps))
            assert rep.gamma > 0
            env = make_env(inst.base, prob.sample_space, ShiftMap.linear(eps))
            tr = run("rrm", prob, env, np.zeros(dim),
                     RrmConfig(outer_iters=300, inner=TIGHT, argmin_tol=1e-13))
            theta_s = tr.final_theta
            assert np.linalg.norm(theta_s - dflt["stable_point"](eps)) <= 1e-8
            theta_o = _grid_optimum(kind, inst.base.X, eps, dflt["lam"], dflt["ridge"])
            assert np.linalg.norm(theta_s - theta_o) <= rep.subopt_param_bound
            gap = dpr(prob, theta_s, theta_s, env, TIGHT) - dpr(prob, theta_o, theta_o, env, TIGHT)
            assert gap <= rep.subopt_risk_bound


@pytest.mark.criterion(7, "exact W1 between deployments equals eps |dtheta^S| within 1e-9, < 30 s")
def test_ac7_w1_certificate():
    rng = np.random.default_rng(7)
    inst = synth_instance("logistic-gaussian", 6, 64, 7)
    base = inst.base
    mask = base.strategic_mask
    eps = 0.7
    env = make_env(base, inst.problem.sample_space, ShiftMap.linear(eps))
    worst = 0.0
    with Budget(30.0):
        for _ in range(100):
            a, b = rng.uniform(-1, 1, size=(2, base.dim))
            ea, eb = deploy(env, a), deploy(env, b)
            assert ea.clamped == 0 and eb.clamped == 0
            worst = max(worst, abs(wasserstein1_exact(ea.X, eb.X) - eps * np.linalg.norm((a - b)[mask])))
    assert worst <= 1e-9, worst


# --- AC8 / AC9 -------------------------------------------------------------

def _credit_csv():
    for cand in (os.environ.get("DRPP_CREDIT_CSV"), ROOT / "data" / "cs-training.csv"):
        if cand and Path(cand).is_file():
            return Path(cand)
    return None


@pytest.fixture(scope="module")
def credit_run():
    cfg = ExperimentConfig.load(CREDIT_CONFIG)
    csv_path = _credit_csv()
    if csv_path is not None:
        cfg = cfg.override_many([("instance.source", "credit_csv"), ("instance.path", str(csv_path))])
    else:
        assert cfg.instance.kind == "logistic-gaussian" and cfg.instance.n == 1000
    t0 = time.perf_counter()
    _, results = execute(cfg, threads=1)
    return cfg, results, time.perf_counter() - t0


@pytest.mark.criterion(8, "DR-RRM early stop for the two smallest eps and gap <= 1e-6 within 20 rounds, < 5 min")
def test_ac8_early_stop_and_convergence(credit_run):
    cfg, results, elapsed = credit_run
    assert elapsed < 300
    assert cfg.outer_iters == 20
    rrm = {r.epsilon: r.trace for r in results if r.algorithm == "rrm"}
    assert all(tr.error is None for tr in rrm.values())
    eps = sorted(rrm)
    for e in eps[:2]:
        assert rrm[e].stop_reason == "numerically zero", e
        assert len(rrm[e].records) <= 3, (e, len(rrm[e].records))
    for e in eps:
        assert np.any(rrm[e].gaps[:20] <= 1e-6), e


@pytest.mark.criterion(9, "detection at t = 20: DR-PP >= PP >= static for the two largest eps, < 5 min")
def test_ac9_detection_ordering(credit_run):
    cfg, results, elapsed = credit_run
    assert elapsed < 300
    det = {(r.epsilon, r.algorithm): detection_at(r.trace, 20) for r in results}
    for e in sorted({r.epsilon for r in results})[-2:]:
        assert det[e, "rrm"] >= det[e, "pp_rrm"] >= det[e, "static"], (e, det)


@pytest.mark.criterion(10, "exact-case RRM and RGD limits agree within 1e-6 on the linear instance, < 10 s")
def test_ac10_exact_fixed_point_agreement():
    with Budget(10.0):
        inst = synth_instance("linear", 2, 32, 10)
        prob = inst.problem
        eps = 0.2
        env = make_env(inst.base, prob.sample_space, ShiftMap.linear(eps))
        rrm = run("rrm", prob, env, np.zeros(2), RrmConfig(outer_iters=200, argmin_tol=1e-13))
        rgd = run("rgd", prob, env, np.zeros(2), RgdConfig(outer_iters=2000, eta=0.5))
        assert rrm.error is None and rgd.error is None
        assert np.linalg.norm(rrm.final_theta - rgd.final_theta) <= 1e-6


PLOT_DATA = ("trajectories.csv", "phase_metrics.csv", "detection_vs_epsilon.csv", "detection_vs_lambda.csv")


@pytest.mark.criterion(11, "two full runs with different --threads give byte-identical plot data, < 5 min")
def test_ac11_determinism_across_threads(tmp_path):
    with Budget(300.0):
        for name, threads in (("a", "1"), ("b", "4")):
            subprocess.run([sys.executable, "-m", "drpp.cli", "run", str(CREDIT_CONFIG), "--threads", threads,
                            "--out", str(tmp_path / name)], check=True, capture_output=True, cwd=ROOT)
    for name in PLOT_DATA:
        a, b = (tmp_path / "a" / name).read_bytes(), (tmp_path / "b" / name).read_bytes()
        assert a and a == b, name
