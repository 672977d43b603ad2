"""Decision-dependent data distribution: base data plus a strategic shift map."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import SampleSpace
from .errors import InvalidArgument, StateError, Unsupported


@dataclass(frozen=True)
class BaseDataset:
    """Feature matrix (intercept column included), labels and ingestion stats."""

    X: np.ndarray
    y: Optional[np.ndarray]
    feature_names: tuple
    strategic_mask: np.ndarray
    means: Optional[np.ndarray] = None
    scales: Optional[np.ndarray] = None
    dropped_rows: int = 0

    def __post_init__(self):
        X = np.asarray(self.X, float)
        if X.ndim != 2 or X.shape[0] < 1:
            raise InvalidArgument("dataset needs at least one sample")
        mask = np.asarray(self.strategic_mask, bool)
        if mask.shape != (X.shape[1],):
            raise InvalidArgument("strategic_mask must have the feature dimension")
        if len(self.feature_names) != X.shape[1]:
            raise InvalidArgument("one feature name per column is required")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "strategic_mask", mask)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.y is not None:
            y = np.asarray(self.y, float)
            if y.shape != (X.shape[0],):
                raise InvalidArgument("one label per sample is required")
            object.__setattr__(self, "y", y)

    def __len__(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class ShiftMap:
    """x^S -> x^S - epsilon * theta^S (``linear_strategic``) or no response."""

    kind: str = "linear_strategic"
    epsilon_sens: float = 0.0
    compounding: bool = False

    def __post_init__(self):
        if self.kind not in ("linear_strategic", "identity"):
            raise InvalidArgument(f"unknown shift kind {self.kind!r}")
        if self.epsilon_sens < 0:
            raise InvalidArgument("epsilon_sens must be nonnegative")
        if self.kind == "identity" and self.epsilon_sens != 0:
            raise InvalidArgument("identity shift has epsilon_sens = 0")

    @classmethod
    def identity(cls):
        return cls("identity", 0.0)

    @classmethod
    def linear(cls, epsilon, compounding=False):
        return cls("linear_strategic", float(epsilon), compounding)


@dataclass(frozen=True)
class EnvState:
    """Immutable snapshot of P(theta): current samples and what produced them."""

    base: BaseDataset
    space: SampleSpace
    shift: ShiftMap = field(default_factory=ShiftMap.identity)
    X: Optional[np.ndarray] = None
    deployed_theta: Optional[np.ndarray] = None
    rng_seed: int = 0
    epoch: int = 0
    clamped: int = 0

    def __post_init__(self):
        if self.base.dim != self.space.dim:
            raise InvalidArgument("dataset and sample space dimensions differ")
        if self.X is None:
            object.__setattr__(self, "X", self.space.clamp(self.base.X))

    @property
    def y(self):
        return self.base.y

    def __len__(self):
        return self.X.shape[0]


def make_env(base: BaseDataset, space: SampleSpace, shift: ShiftMap = None, seed=0) -> EnvState:
    return EnvState(base, space, shift or ShiftMap.identity(), rng_seed=int(seed))


def shifted_features(env: EnvState, theta, shift: ShiftMap = None, reference=None):
    """Features after agents respond to ``theta``; returns (X, clamped_count)."""
    shift = shift or env.shift
    theta = np.asarray(theta, float)
    mask = env.base.strategic_mask
    if theta.shape != (env.base.dim,):
        raise InvalidArgument(
            f"theta has shape {theta.shape}, expected ({env.base.dim},) to match the features")
    ref = env.base.X if reference is None else reference
    if shift.kind == "identity" or shift.epsilon_sens == 0.0:
        X = ref.copy()
    else:
        X = ref - shift.epsilon_sens * np.where(mask, theta, 0.0)
    clamped = np.clip(X, env.space.lo, env.space.hi)
    count = int(np.count_nonzero(clamped != X))
    return clamped, count


def deploy(env: EnvState, theta, shift: ShiftMap = None) -> EnvState:
    """Deploy ``theta``: samples become the base data shifted by -epsilon theta^S.

    With ``shift.compounding`` the response is applied to the current samples
    instead, which reproduces the literal round-to-round recursion.
    """
    shift = shift or env.shift
    ref = env.X if shift.compounding else None
    X, count = shifted_features(env, theta, shift, ref)
    return replace(env, shift=shift, X=X, deployed_theta=np.array(theta, float),
                   epoch=env.epoch + 1, clamped=count)


def draw_batch(env: EnvState, n=None, seed=None, full_batch=False):
    """Return (X, y) drawn from the current samples.

    ``full_batch`` (or ``n`` None) returns everything in stored order. Otherwise
    ``n`` indices are drawn uniformly with replacement from a Philox stream keyed
    by ``(seed, epoch)``, so the draw depends on nothing else.
    """
    m = len(env)
    if m == 0:
        raise StateError("cannot draw from an empty dataset")
    if full_batch or n is None:
        return env.X, env.y
    if n < 1:
        raise InvalidArgument("batch size must be >= 1")
    idx = draw_indices(env, n, seed)
    return env.X[idx], (None if env.y is None else env.y[idx])


def draw_indices(env: EnvState, n, seed=None):
    """Row indices behind ``draw_batch``."""
    seed = env.rng_seed if seed is None else seed
    gen = np.random.Generator(np.random.Philox(key=[int(seed), int(env.epoch)]))
    return gen.integers(0, len(env), size=int(n))


def sensitivity_certificate(shift: ShiftMap, mask=None) -> float:
    """Epsilon such that W1(P(theta), P(theta')) <= epsilon |theta - theta'|."""
    if shift.kind == "identity":
        return 0.0
    if shift.kind == "linear_strategic":
        return float(shift.epsilon_sens)
    raise Unsupported(f"no sensitivity certificate for {shift.kind!r}")
