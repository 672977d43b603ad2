"""Dataset ingestion (credit CSV) and synthetic desk-scale instances."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import LossModel, ParamSpace, PenaltyFunction, RobustProblem, SampleSpace, project_sample
from .env import BaseDataset
from .errors import IngestionError, InvalidArgument

MISSING = {"", "na", "nan", "null", "none"}

CREDIT_STRATEGIC = (
    "RevolvingUtilizationOfUnsecuredLines",
    "NumberOfOpenCreditLinesAndLoans",
    "NumberRealEstateLoansOrLines",
)


@dataclass(frozen=True)
class CreditSchema:
    target: str = "SeriousDlqin2yrs"
    strategic: tuple = CREDIT_STRATEGIC
    features: Optional[tuple] = None  # None: every numeric column except target/index
    box_bound: float = 5.0
    index_columns: tuple = ("", "Unnamed: 0", "id", "Id")


def _parse(cell):
    s = cell.strip()
    if s.lower() in MISSING:
        return math.nan
    return float(s)


def ingest_credit_csv(path, schema: CreditSchema = CreditSchema()) -> BaseDataset:
    """Read a credit CSV into a standardized, clamped dataset with an intercept.

    Rows with any missing value are dropped (the count is kept on the result).
    Features are z-scored with the statistics of the kept rows, clamped to
    [-B, B], and an always-one ``intercept`` column is appended.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        rows = list(reader)
    header = [h.strip() for h in header]
    if schema.target not in header:
        raise IngestionError(f"{path}: target column {schema.target!r} not found in header {header}")
    if schema.features is not None:
        missing = [f for f in schema.features if f not in header]
        if missing:
            raise IngestionError(f"{path}: feature columns {missing} not found")
        feats = list(schema.features)
    else:
        feats = [h for h in header if h != schema.target and h not in schema.index_columns]
    if not feats:
        raise IngestionError(f"{path}: no feature columns")
    if not rows:
        raise IngestionError(f"{path}: no data rows")

    cols = [header.index(f) for f in feats]
    tcol = header.index(schema.target)
    data = np.empty((len(rows), len(feats)))
    y = np.empty(len(rows))
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise IngestionError(f"{path}: row {r + 2} has {len(row)} cells, header has {len(header)}")
        for j, c in enumerate(cols):
            try:
                data[r, j] = _parse(row[c])
            except ValueError:
                raise IngestionError(
                    f"{path}: row {r + 2}, column {feats[j]!r}: non-numeric value {row[c]!r}") from None
        try:
            y[r] = _parse(row[tcol])
        except ValueError:
            raise IngestionError(
                f"{path}: row {r + 2}, column {schema.target!r}: non-numeric value {row[tcol]!r}") from None

    all_missing = [feats[j] for j in range(len(feats)) if np.all(np.isnan(data[:, j]))]
    if all_missing:
        raise IngestionError(f"{path}: column(s) {all_missing} have no values")
    keep = ~(np.isnan(data).any(axis=1) | np.isnan(y))
    dropped = int((~keep).sum())
    data, y = data[keep], y[keep]
    if data.shape[0] == 0:
        raise IngestionError(f"{path}: every row has a missing value")
    bad = ~np.isin(y, (0.0, 1.0))
    if bad.any():
        r = int(np.flatnonzero(keep)[np.flatnonzero(bad)[0]]) + 2
        raise IngestionError(f"{path}: row {r}, column {schema.target!r}: label must be 0 or 1")

    means = data.mean(axis=0)
    scales = data.std(axis=0)
    scales[scales == 0] = 1.0
    B = schema.box_bound
    X = np.clip((data - means) / scales, -B, B)
    X = np.hstack([X, np.ones((X.shape[0], 1))])
    names = tuple(feats) + ("intercept",)
    mask = np.array([f in schema.strategic for f in feats] + [False])
    return BaseDataset(X, y, names, mask, means, scales, dropped)


def feature_box(dim, bound):
    """Sample space [-B, B]^dim plus a fixed intercept coordinate at 1."""
    lo = np.r_[np.full(dim, -bound), 1.0]
    hi = np.r_[np.full(dim, bound), 1.0]
    mask = np.r_[np.ones(dim, bool), False]
    return SampleSpace(lo, hi, mask)


def credit_problem(base: BaseDataset, box_bound=5.0, ridge=0.1, lam_c=30.0, lam_a=0.1,
                   theta_radius=10.0) -> RobustProblem:
    """Robust logistic problem on a credit-style dataset (intercept in the last slot)."""
    d = base.dim
    return RobustProblem(
        loss=LossModel.logistic(ridge),
        penalty=PenaltyFunction.quadratic(lam_c, lam_a) if lam_a > 0 else PenaltyFunction.constant(lam_c),
        sample_space=feature_box(d - 1, box_bound),
        param_space=ParamSpace.ball(np.zeros(d), theta_radius),
    )


@dataclass
class SyntheticInstance:
    base: BaseDataset
    problem: RobustProblem
    defaults: dict = field(default_factory=dict)

    @property
    def loss(self):
        return self.problem.loss


SYNTH_KINDS = ("quadratic", "linear", "logistic-gaussian")


def synth_instance(kind, dim, n, seed, **overrides) -> SyntheticInstance:
    """Deterministic synthetic instance for oracle checks and smoke runs.

    quadratic:  l = 1/2 |theta - zeta|^2 + r/2 |theta|^2, constant lambda.
    linear:     l = theta.zeta + r/2 |theta|^2, constant lambda.
    logistic-gaussian: two labelled Gaussian clusters, credit-style problem.

    The quadratic and linear kinds carry closed-form inner maximizers and
    stable points in ``defaults`` (valid while nothing is clamped).
    """
    if kind not in SYNTH_KINDS:
        raise InvalidArgument(f"unknown synthetic kind {kind!r}; expected one of {SYNTH_KINDS}")
    if int(dim) < 1:
        raise InvalidArgument("dim must be >= 1")
    if int(n) < 2:
        raise InvalidArgument("n must be >= 2")
    rng = np.random.default_rng(seed)
    if kind == "logistic-gaussian":
        return _logistic_gaussian(rng, int(dim), int(n), **overrides)
    return _closed_form_instance(kind, rng, int(dim), int(n), **overrides)


def _closed_form_instance(kind, rng, dim, n, ridge=1.0, lam=30.0, data_bound=1.0,
                          box_bound=10.0, theta_bound=3.0):
    X = rng.uniform(-data_bound, data_bound, size=(n, dim))
    names = tuple(f"x{i}" for i in range(dim))
    base = BaseDataset(X, None, names, np.ones(dim, bool))
    space = SampleSpace(np.full(dim, -box_bound), np.full(dim, box_bound), label_domain=None)
    theta_space = ParamSpace.box(np.full(dim, -theta_bound), np.full(dim, theta_bound))
    pen = PenaltyFunction.constant(lam)
    m = X.mean(axis=0)
    if kind == "quadratic":
        loss = LossModel.quadratic(theta_curv=1.0, cross=-1.0, zeta_curv=1.0, ridge=ridge)

        def inner(theta, xi):
            return (2 * lam * np.asarray(xi) - theta) / (2 * lam - 1)

        def stable(eps):
            return 2 * lam * m / ((2 * lam - 1) * (1 + ridge) + 2 * lam * eps + 1)

        def rrm_map(theta, eps):
            return (2 * lam * m - (2 * lam * eps + 1) * np.asarray(theta)) / ((2 * lam - 1) * (1 + ridge))

        def f(theta, xi):
            theta = np.asarray(theta, float)
            xi = np.asarray(xi, float)
            d = xi - theta
            return lam / (2 * lam - 1) * np.einsum("...i,...i->...", d, d) + 0.5 * ridge * theta @ theta
    else:
        loss = LossModel.linear(ridge)

        def inner(theta, xi):
            return project_sample(space, np.asarray(xi) + np.asarray(theta) / (2 * lam))

        def stable(eps):
            return -m / (ridge - eps + 1 / (2 * lam))

        def rrm_map(theta, eps):
            return -(m - eps * np.asarray(theta) + np.asarray(theta) / (2 * lam)) / ridge

        def f(theta, xi):
            theta = np.asarray(theta, float)
            return (np.einsum("...i,i->...", np.asarray(xi, float), theta)
                    + theta @ theta / (4 * lam) + 0.5 * ridge * theta @ theta)

    problem = RobustProblem(loss, pen, space, theta_space)
    defaults = dict(lam=lam, ridge=ridge, mean=m, inner_closed_form=inner, stable_point=stable,
                    rrm_map=rrm_map, f_closed_form=f)
    return SyntheticInstance(base, problem, defaults)


def _logistic_gaussian(rng, dim, n, separation=1.0, box_bound=5.0, ridge=0.1, lam_c=30.0,
                       lam_a=0.1, theta_radius=10.0, n_strategic=3):
    y = (rng.uniform(size=n) < 0.5).astype(float)
    direction = rng.normal(size=dim)
    direction /= np.linalg.norm(direction)
    centers = np.where(y[:, None] == 1, 1.0, -1.0) * (0.5 * separation) * direction
    X = np.clip(centers + rng.normal(size=(n, dim)), -box_bound, box_bound)
    X = np.hstack([X, np.ones((n, 1))])
    names = tuple(f"f{i}" for i in range(dim)) + ("intercept",)
    mask = np.r_[np.arange(dim) < n_strategic, False]
    base = BaseDataset(X, y, names, mask)
    problem = credit_problem(base, box_bound, ridge, lam_c, lam_a, theta_radius)
    return SyntheticInstance(base, problem, dict(direction=direction))
