import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import wasserstein_distance

from drpp import (ConcavityViolation, ConstantsReport, InnerSolveConfig, InvalidArgument, RegularityLedger,
                  ShiftMap, compute_constants, contraction_gd, contraction_rm, dpr, make_env,
                  performative_risk, suboptimality_bounds, synth_instance, wasserstein1_exact)
from drpp.analysis import W1_SIZE_CAP
from oracles import GOLDEN_LEDGER, golden_text

LEDGER = RegularityLedger(**{k: float(v) for k, v in GOLDEN_LEDGER.items()})


def read_golden(path):
    out = {}
    for line in path.read_text().splitlines():
        if line.startswith("#"):
            continue
        k, _, v = line.partition("=")
        out[k.strip()] = float(v)
    return out


def test_golden_file_is_current(data_dir):
    assert (data_dir / "constants_golden.txt").read_text() == golden_text()


def test_constants_match_golden_within_two_ulp(data_dir):
    rep = compute_constants(LEDGER, inner_tol=1e-3, eta=1e-2)
    for k, want in read_golden(data_dir / "constants_golden.txt").items():
        got = getattr(rep, k)
        assert abs(got - want) <= 2 * np.spacing(abs(want)), (k, got, want)


def test_gamma_nonpositive_gates_rm_quantities():
    led = RegularityLedger(**{**LEDGER.__dict__, "gamma_loss": 1.0})
    rep = compute_constants(led, 1e-3)
    assert rep.gamma < 0 and "gamma_nonpositive" in rep.flags
    assert math.isnan(rep.kappa_rm) and math.isnan(rep.subopt_param_bound)
    assert rep.kappa_gd > 1 and rep.eta_bound < 0
    assert not rep.theory_applies
    with pytest.raises(InvalidArgument):
        contraction_rm(rep, 0.1, 0.0)
    with pytest.raises(InvalidArgument):
        suboptimality_bounds(rep, 0.1)


def test_mu_nonpositive_raises():
    led = RegularityLedger(**{**LEDGER.__dict__, "L_zz": 20.0})
    with pytest.raises(ConcavityViolation):
        compute_constants(led)


def test_exact_inner_solve_has_no_neighborhood():
    rep = compute_constants(LEDGER, inner_tol=0.0)
    assert rep.C_rm == 0 and rep.rm_neighborhood == 0
    assert rep.C_gd == 0 and rep.gd_neighborhood == 0


def test_helper_functions_agree_with_report():
    rep = compute_constants(LEDGER, inner_tol=1e-3, eta=1e-2)
    assert contraction_rm(rep, 0.1, 1e-3) == (rep.kappa_rm, rep.C_rm, rep.rm_neighborhood)
    assert contraction_gd(rep, 0.1, 1e-3, 1e-2) == (rep.kappa_gd, rep.C_gd, rep.eta_bound,
                                                    rep.gd_neighborhood)
    assert suboptimality_bounds(rep, 0.1) == (rep.subopt_param_bound, rep.subopt_risk_bound)
    assert contraction_rm(rep, 1.0, 0.0)[2] == math.inf  # kappa_rm >= 1


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-6, 1.0))
def test_kappa_gd_below_one_exactly_when_eta_below_bound(frac):
    rep = compute_constants(LEDGER)
    assume(abs(frac - 1.0) > 1e-9)
    below = contraction_gd(rep, 0.1, 0.0, frac * rep.eta_bound)[0]
    above = contraction_gd(rep, 0.1, 0.0, (1 + frac) * rep.eta_bound)[0]
    assert below < 1 < above


def test_report_text_round_trip():
    for rep in (compute_constants(LEDGER, 1e-3),
                compute_constants(RegularityLedger(**{**LEDGER.__dict__, "gamma_loss": 1.0}), 1e-3)):
        text = rep.to_text()
        back = ConstantsReport.from_text(text)
        assert back.to_text() == text
        assert len(text.splitlines()) == len(ConstantsReport.__dataclass_fields__)


# --- W1 --------------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 20, elements=st.floats(-10, 10)), arrays(np.float64, 20, elements=st.floats(-10, 10)))
def test_w1_matches_scipy_in_one_dimension(a, b):
    assert wasserstein1_exact(a, b) == pytest.approx(wasserstein_distance(a, b), abs=1e-9)


def test_w1_translation_and_validation():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(30, 3))
    shift = np.array([0.3, -0.4, 0.0])
    assert wasserstein1_exact(A, A + shift) == pytest.approx(0.5, abs=1e-12)
    assert wasserstein1_exact(A, A[::-1]) == 0.0
    with pytest.raises(InvalidArgument):
        wasserstein1_exact(A, A[:5])
    big = np.zeros((W1_SIZE_CAP + 1, 1))
    with pytest.raises(InvalidArgument):
        wasserstein1_exact(big, big)


# --- decoupled performative risk -------------------------------------------

def test_dpr_matches_closed_form_quadratic():
    inst = synth_instance("quadratic", 2, 24, 0)
    prob, f = inst.problem, inst.defaults["f_closed_form"]
    env = make_env(inst.base, prob.sample_space, ShiftMap.linear(0.4))
    cfg = InnerSolveConfig(inner_tol=1e-12, max_ascent_iters=100_000)
    th, th2 = np.array([0.3, -0.2]), np.array([-0.5, 0.1])
    want = np.mean(f(th2, inst.base.X - 0.4 * th))
    assert dpr(prob, th, th2, env, cfg) == pytest.approx(want, abs=1e-12)
    assert performative_risk(prob, th, env, cfg) == pytest.approx(
        np.mean(f(th, inst.base.X - 0.4 * th)), abs=1e-12)
