"""Closed-form Lipschitz constants, contraction factors, suboptimality bounds,
the decoupled performative risk and an exact empirical W1 oracle."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .core import RegularityLedger, RobustProblem
from .env import EnvState, deploy
from .errors import ConcavityViolation, InvalidArgument
from .inner import InnerSolveConfig, solve_inner

W1_SIZE_CAP = 512


@dataclass(frozen=True)
class ConstantsReport:
    epsilon_sens: float
    inner_tol: float
    eta: float
    L_phi_tt: float
    L_phi_txi: float
    L_phi_tz: float
    L_phi_zt: float
    L_phi_zxi: float
    L_f_tt: float
    L_f_txi: float
    L_f_xi: float
    mu: float
    gamma: float
    gamma_literal: float
    kappa_rm: float
    C_rm: float
    rm_neighborhood: float
    beta: float
    kappa_gd: float
    C_gd: float
    eta_bound: float
    gd_neighborhood: float
    subopt_param_bound: float
    subopt_risk_bound: float

    @property
    def theory_applies(self):
        return self.gamma > 0 and self.kappa_rm < 1

    @property
    def flags(self):
        out = []
        if not self.gamma > 0:
            out.append("gamma_nonpositive")
        if not self.kappa_rm < 1:
            out.append("kappa_rm_ge_1")
        if not self.kappa_gd < 1:
            out.append("kappa_gd_ge_1")
        return out

    def to_text(self):
        """One ``name = value`` line per field, 17 significant digits."""
        return "".join(f"{f.name} = {getattr(self, f.name):.17g}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text):
        vals = {}
        for line in text.splitlines():
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            k, _, v = line.partition("=")
            vals[k.strip()] = float(v)
        return cls(**vals)


def compute_constants(ledger: RegularityLedger, inner_tol=0.0, eta=1e-2) -> ConstantsReport:
    """Every constant of the convergence theory, from the ledger entries.

    The risk-minimization contraction and the suboptimality bounds need
    gamma > 0 and are NaN otherwise; the gradient-descent factor is always
    computed (it is simply >= 1 when gamma is too small).
    """
    mu = ledger.mu
    if not mu > 0:
        raise ConcavityViolation(f"mu = {mu:.6g} <= 0; the constants are undefined")
    D, Ll, Hl, lmax = ledger.D_xi, ledger.L_lam, ledger.H_lam, ledger.lam_max
    eps = ledger.epsilon_sens

    L_phi_tt = ledger.L_tt + Hl * D ** 2
    L_phi_txi = 2 * Ll * D
    L_phi_tz = ledger.L_tz + 2 * Ll * D
    L_phi_zt = ledger.L_zt + 2 * D * Ll
    L_phi_zxi = 2 * lmax
    L_f_tt = ledger.L_tt + Hl * D ** 2 + (ledger.L_tz + 2 * D * Ll) * (ledger.L_zt + 2 * D * Ll) / mu
    L_f_txi = 2 * lmax * (ledger.L_tz + 2 * Ll * D) / mu + 2 * Ll * D
    L_f_xi = 2 * lmax * (ledger.L_z + 2 * lmax * D) / mu + 2 * lmax * D
    gamma = ledger.gamma
    beta = L_f_tt + eps * L_f_txi

    nan = math.nan
    kappa_rm = C_rm = rm_nb = nan
    p_bound = r_bound = nan
    kappa_gd, C_gd, eta_bound, gd_nb = _gd(eps, L_f_txi, L_phi_tz, gamma, beta, inner_tol, eta)
    if gamma > 0:
        kappa_rm, C_rm, rm_nb = _rm(eps, L_f_txi, L_phi_tz, gamma, inner_tol)
        p_bound, r_bound = _subopt(eps, L_f_xi, gamma)

    return ConstantsReport(
        epsilon_sens=eps, inner_tol=float(inner_tol), eta=float(eta),
        L_phi_tt=L_phi_tt, L_phi_txi=L_phi_txi, L_phi_tz=L_phi_tz, L_phi_zt=L_phi_zt,
        L_phi_zxi=L_phi_zxi, L_f_tt=L_f_tt, L_f_txi=L_f_txi, L_f_xi=L_f_xi,
        mu=mu, gamma=gamma, gamma_literal=ledger.gamma_literal,
        kappa_rm=kappa_rm, C_rm=C_rm, rm_neighborhood=rm_nb,
        beta=beta, kappa_gd=kappa_gd, C_gd=C_gd, eta_bound=eta_bound, gd_neighborhood=gd_nb,
        subopt_param_bound=p_bound, subopt_risk_bound=r_bound,
    )


def _rm(eps, L_f_txi, L_phi_tz, gamma, inner_tol):
    kappa = eps * L_f_txi / gamma
    C = 2 * L_phi_tz * inner_tol / gamma
    nb = C / (1 - kappa) if kappa < 1 else math.inf
    return kappa, C, nb


def _gd(eps, L_f_txi, L_phi_tz, gamma, beta, inner_tol, eta):
    excess = eta * eta * beta * beta + 2 * eta * (eps * L_f_txi - gamma)  # kappa^2 - 1
    kappa = math.sqrt(max(excess + 1, 0.0))
    # 1 - kappa without the cancellation of subtracting two nearly equal numbers
    one_minus = -excess / (1 + kappa)
    if inner_tol == 0:
        C = 0.0
    else:
        C = 2 * eta * inner_tol * (L_phi_tz * (eta * beta + 1) / kappa + L_phi_tz) if kappa > 0 else math.inf
    eta_bound = 2 * (gamma - eps * L_f_txi) / beta ** 2
    nb = C / one_minus if kappa < 1 else math.inf
    return kappa, C, eta_bound, nb


def _subopt(eps, L_f_xi, gamma):
    return 2 * eps * L_f_xi / gamma, 2 * (eps * L_f_xi) ** 2 / gamma


def _need_gamma(report):
    if not report.gamma > 0:
        raise InvalidArgument(f"gamma = {report.gamma:.6g} <= 0; the contraction theory does not apply")


def contraction_rm(report: ConstantsReport, epsilon_sens, inner_tol):
    """(kappa_rm, C_rm, C_rm / (1 - kappa_rm)); the last is inf when kappa_rm >= 1."""
    _need_gamma(report)
    return _rm(epsilon_sens, report.L_f_txi, report.L_phi_tz, report.gamma, inner_tol)


def contraction_gd(report: ConstantsReport, epsilon_sens, inner_tol, eta):
    """(kappa_gd, C_gd, eta_bound, neighborhood) at step size ``eta``."""
    beta = report.L_f_tt + epsilon_sens * report.L_f_txi
    return _gd(epsilon_sens, report.L_f_txi, report.L_phi_tz, report.gamma, beta, inner_tol, eta)


def suboptimality_bounds(report: ConstantsReport, epsilon_sens):
    """(distance bound, risk bound) between the stable point and the optimum."""
    _need_gamma(report)
    return _subopt(epsilon_sens, report.L_f_xi, report.gamma)


def dpr(problem: RobustProblem, theta_dist, theta_eval, env_base: EnvState,
        cfg: InnerSolveConfig = None):
    """Mean of f(theta_eval, .) over the samples induced by deploying theta_dist."""
    env = deploy(env_base, theta_dist)
    sol = solve_inner(problem, theta_eval, env.X, env.y, cfg)
    return float(np.mean(sol.phi_value))


def performative_risk(problem, theta, env_base, cfg=None):
    return dpr(problem, theta, theta, env_base, cfg)


def wasserstein1_exact(A, B):
    """W1 between two uniform empirical measures of equal size (Euclidean cost).

    Solved exactly as a linear assignment problem.
    """
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    if A.shape != B.shape:
        raise InvalidArgument(f"sample sets differ in shape: {A.shape} vs {B.shape}")
    if A.shape[0] > W1_SIZE_CAP:
        raise InvalidArgument(f"exact W1 is capped at {W1_SIZE_CAP} samples, got {A.shape[0]}")
    if A.shape[0] == 0:
        raise InvalidArgument("empty sample sets")
    cost = cdist(A, B)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / A.shape[0])
