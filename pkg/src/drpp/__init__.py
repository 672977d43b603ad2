"""Wasserstein distributionally robust performative prediction."""
from .algorithms import ALGORITHMS, RgdConfig, RrmConfig, RunTrace, minimize_frozen, rgd_step, rrm_step, run
from .analysis import (ConstantsReport, compute_constants, contraction_gd, contraction_rm, dpr,
                       performative_risk, suboptimality_bounds, wasserstein1_exact)
from .core import (LossModel, ParamSpace, PenaltyFunction, RegularityLedger, RobustProblem, Sample,
                   SampleSpace, project_params, project_sample, transport_cost)
from .data import CreditSchema, credit_problem, ingest_credit_csv, synth_instance
from .env import BaseDataset, EnvState, ShiftMap, deploy, draw_batch, make_env, sensitivity_certificate
from .errors import (ConcavityViolation, ConvexityViolation, DrppError, IngestionError, InvalidArgument,
                     NonConvergence, StateError, Unsupported)
from .inner import InnerSolution, InnerSolveConfig, danskin_grad, phi, solve_inner, surrogate_f
from .metrics import accuracy, detection_rate
