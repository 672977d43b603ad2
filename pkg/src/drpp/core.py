"""Domain types: constraint sets, losses, penalties and the regularity ledger.

Conventions used throughout the package:

* ``theta`` is a 1-d array of length ``d``; the logistic model keeps its
  intercept in the last slot, carried by an always-one feature.
* a sample's features ``xi`` live in the same ``d``-dimensional space as
  ``theta``; labels are kept separately and are never transported.
* batched functions accept ``zeta`` of shape ``(d,)`` or ``(n, d)`` and
  return arrays with the matching leading shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit as _sigmoid

from .errors import InvalidArgument

PARAM_KINDS = ("ball", "box", "unconstrained")
LOSS_KINDS = ("logistic", "ridge-logistic", "quadratic-synthetic", "linear-synthetic")


def _vec(x, name="vector"):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise InvalidArgument(f"{name} must be 1-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} has non-finite entries")
    return arr


# ---------------------------------------------------------------------------
# parameter space


@dataclass(frozen=True)
class ParamSpace:
    """Closed convex set for the model parameter: a ball, a box, or all of R^d.

    ``tol`` is the relative slack under which a point counts as already
    feasible; it is what makes projection exactly idempotent in floating point.
    """

    kind: str = "unconstrained"
    center: Optional[np.ndarray] = None
    radius: float = math.inf
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None
    tol: float = 1e-12

    def __post_init__(self):
        if self.kind not in PARAM_KINDS:
            raise InvalidArgument(f"unknown parameter space kind {self.kind!r}")
        if self.kind == "ball":
            if self.center is None or not (self.radius > 0 and math.isfinite(self.radius)):
                raise InvalidArgument("ball needs a center and a finite positive radius")
            object.__setattr__(self, "center", _vec(self.center, "center"))
        if self.kind == "box":
            lo, hi = _vec(self.lo, "lo"), _vec(self.hi, "hi")
            if lo.shape != hi.shape or np.any(lo > hi):
                raise InvalidArgument("box needs lo <= hi of equal shape")
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)

    @classmethod
    def ball(cls, center, radius, tol=1e-12):
        return cls("ball", center=np.asarray(center, float), radius=float(radius), tol=tol)

    @classmethod
    def box(cls, lo, hi, tol=1e-12):
        return cls("box", lo=np.asarray(lo, float), hi=np.asarray(hi, float), tol=tol)

    @classmethod
    def unconstrained(cls):
        return cls("unconstrained")

    def project(self, theta):
        return project_params(self, theta)

    def contains(self, theta, atol=0.0):
        theta = np.asarray(theta, float)
        if self.kind == "ball":
            return np.linalg.norm(theta - self.center) <= self.radius * (1 + self.tol) + atol
        if self.kind == "box":
            return bool(np.all(theta >= self.lo - atol) and np.all(theta <= self.hi + atol))
        return bool(np.all(np.isfinite(theta)))

    def sup_norm(self):
        """sup of ||theta|| over the set."""
        if self.kind == "ball":
            return float(np.linalg.norm(self.center) + self.radius)
        if self.kind == "box":
            return float(np.linalg.norm(np.maximum(np.abs(self.lo), np.abs(self.hi))))
        return math.inf

    def inf_norm(self):
        """inf of ||theta|| over the set (distance from the origin)."""
        if self.kind == "ball":
            return max(0.0, float(np.linalg.norm(self.center)) - self.radius)
        if self.kind == "box":
            return float(np.linalg.norm(np.clip(0.0, self.lo, self.hi)))
        return 0.0

    def sample(self, rng, n, dim=None):
        """Uniform-ish random points of the set, for property checks."""
        if self.kind == "box":
            return rng.uniform(self.lo, self.hi, size=(n, self.lo.size))
        if self.kind == "ball":
            d = self.center.size
            u = rng.normal(size=(n, d))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            r = self.radius * rng.uniform(size=(n, 1)) ** (1.0 / d)
            return self.center + r * u
        if dim is None:
            raise InvalidArgument("dim is required to sample an unconstrained space")
        return rng.normal(scale=3.0, size=(n, dim))


def project_params(space: ParamSpace, theta):
    """Euclidean projection of ``theta`` onto ``space``."""
    theta = _vec(theta, "theta")
    if space.kind == "unconstrained":
        return theta.copy()
    if space.kind == "box":
        if theta.shape != space.lo.shape:
            raise InvalidArgument("theta dimension does not match the box")
        return np.clip(theta, space.lo, space.hi)
    if theta.shape != space.center.shape:
        raise InvalidArgument("theta dimension does not match the ball")
    offset = theta - space.center
    dist = np.linalg.norm(offset)
    if dist <= space.radius * (1 + space.tol):
        return theta.copy()
    return space.center + offset * (space.radius / dist)


# ---------------------------------------------------------------------------
# sample space


@dataclass(frozen=True)
class SampleSpace:
    """Compact box for the features; ``mask`` flags the perturbable coordinates."""

    lo: np.ndarray
    hi: np.ndarray
    mask: Optional[np.ndarray] = None
    label_domain: Optional[tuple] = (0, 1)

    def __post_init__(self):
        lo, hi = _vec(self.lo, "lo"), _vec(self.hi, "hi")
        if lo.shape != hi.shape:
            raise InvalidArgument("lo and hi must have the same shape")
        if np.any(lo > hi):
            raise InvalidArgument("sample box needs lo <= hi")
        mask = np.ones(lo.size, bool) if self.mask is None else np.asarray(self.mask, bool)
        if mask.shape != lo.shape:
            raise InvalidArgument("mask must match the feature dimension")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "mask", mask)

    @property
    def dim(self):
        return self.lo.size

    def diameter(self):
        # only perturbable coordinates move, so only they enter D_xi
        return float(np.linalg.norm((self.hi - self.lo)[self.mask]))

    def sup_norm(self):
        return float(np.linalg.norm(np.maximum(np.abs(self.lo), np.abs(self.hi))))

    def contains(self, x, atol=0.0):
        x = np.asarray(x, float)
        return bool(np.all(x >= self.lo - atol) and np.all(x <= self.hi + atol))

    def clamp(self, x):
        return np.clip(x, self.lo, self.hi)


def project_sample(space: SampleSpace, zeta, reference=None):
    """Clamp perturbable coordinates into the box.

    Non-perturbable coordinates are copied from ``reference`` when given and
    passed through untouched otherwise.
    """
    zeta = np.asarray(zeta, float)
    if zeta.shape[-1] != space.dim:
        raise InvalidArgument(f"zeta has dimension {zeta.shape[-1]}, space has {space.dim}")
    if not np.all(np.isfinite(zeta)):
        raise InvalidArgument("zeta has non-finite entries")
    out = np.where(space.mask, np.clip(zeta, space.lo, space.hi), zeta)
    if reference is not None:
        reference = np.asarray(reference, float)
        out = np.where(space.mask, out, reference)
    return out


def transport_cost(xi, zeta, mask=None):
    """Squared Euclidean transport cost; batched over leading axes."""
    xi = np.asarray(xi, float)
    zeta = np.asarray(zeta, float)
    if xi.shape[-1] != zeta.shape[-1]:
        raise InvalidArgument("xi and zeta dimensions differ")
    diff = xi - zeta
    if mask is not None:
        diff = diff * np.asarray(mask, bool)
    return np.einsum("...i,...i->...", diff, diff)


@dataclass(frozen=True)
class Sample:
    xi: np.ndarray
    label: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "xi", _vec(self.xi, "xi"))
        if self.label is not None and self.label not in (0, 1):
            raise InvalidArgument("label must be 0 or 1")


# ---------------------------------------------------------------------------
# loss


@dataclass(frozen=True)
class LossConstants:
    """Declared regularity constants of a loss on a compact Theta x Xi."""

    L_tt: float
    L_tz: float
    L_zt: float
    L_z: float
    gamma_loss: float
    L_zz: float

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if not (v >= 0) or math.isnan(v):
                raise InvalidArgument(f"loss constant {name} must be nonnegative, got {v}")


def _dot(zeta, theta):
    return np.einsum("...i,i->...", zeta, theta)


@dataclass(frozen=True)
class LossModel:
    """Loss l(theta, zeta) with analytic gradients.

    quadratic-synthetic is
    ``a/2 |theta|^2 + b theta.zeta + c/2 |zeta|^2 + q sum(zeta) + k``
    with (a, b, c, q, k) = (theta_curv, cross, zeta_curv, zeta_lin, offset);
    linear-synthetic is ``theta.zeta``. Every kind adds ``ridge/2 |theta|^2``.
    """

    kind: str
    ridge: float = 0.0
    theta_curv: float = 0.0
    cross: float = 0.0
    zeta_curv: float = 0.0
    zeta_lin: float = 0.0
    offset: float = 0.0
    declared: Optional[LossConstants] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise InvalidArgument(f"unknown loss kind {self.kind!r}")
        if self.ridge < 0:
            raise InvalidArgument("ridge must be nonnegative")

    @classmethod
    def logistic(cls, ridge=0.0):
        return cls("ridge-logistic" if ridge > 0 else "logistic", ridge=float(ridge))

    @classmethod
    def quadratic(cls, theta_curv=1.0, cross=-1.0, zeta_curv=1.0, zeta_lin=0.0, offset=0.0, ridge=0.0):
        return cls("quadratic-synthetic", ridge=float(ridge), theta_curv=float(theta_curv),
                   cross=float(cross), zeta_curv=float(zeta_curv), zeta_lin=float(zeta_lin),
                   offset=float(offset))

    @classmethod
    def linear(cls, ridge=0.0):
        return cls("linear-synthetic", ridge=float(ridge))

    @property
    def is_logistic(self):
        return self.kind in ("logistic", "ridge-logistic")

    def _label(self, label, zeta):
        if label is None:
            raise InvalidArgument("logistic loss needs labels")
        return np.broadcast_to(np.asarray(label, float), zeta.shape[:-1])

    def value(self, theta, zeta, label=None):
        theta = np.asarray(theta, float)
        zeta = np.asarray(zeta, float)
        reg = 0.5 * self.ridge * float(theta @ theta)
        if self.is_logistic:
            s = _dot(zeta, theta)
            return np.logaddexp(0.0, s) - self._label(label, zeta) * s + reg
        if self.kind == "linear-synthetic":
            return _dot(zeta, theta) + reg
        zz = np.einsum("...i,...i->...", zeta, zeta)
        return (0.5 * self.theta_curv * float(theta @ theta) + self.cross * _dot(zeta, theta)
                + 0.5 * self.zeta_curv * zz + self.zeta_lin * zeta.sum(axis=-1)
                + self.offset + reg)

    def grad_theta(self, theta, zeta, label=None):
        theta = np.asarray(theta, float)
        zeta = np.asarray(zeta, float)
        if self.is_logistic:
            r = _sigmoid(_dot(zeta, theta)) - self._label(label, zeta)
            return r[..., None] * zeta + self.ridge * theta
        if self.kind == "linear-synthetic":
            return zeta + self.ridge * theta
        return (self.theta_curv + self.ridge) * theta + self.cross * zeta

    def grad_zeta(self, theta, zeta, label=None):
        theta = np.asarray(theta, float)
        zeta = np.asarray(zeta, float)
        if self.is_logistic:
            r = _sigmoid(_dot(zeta, theta)) - self._label(label, zeta)
            return r[..., None] * theta
        if self.kind == "linear-synthetic":
            return np.broadcast_to(theta, zeta.shape).copy()
        return self.cross * theta + self.zeta_curv * zeta + self.zeta_lin

    def zeta_curvature(self, theta, mask=None):
        """(upper, lower) eigenvalue bounds of the zeta-Hessian at ``theta``,
        restricted to the perturbable coordinates."""
        if self.is_logistic:
            t = np.asarray(theta, float)
            if mask is not None:
                t = t[np.asarray(mask, bool)]
            return 0.25 * float(t @ t), 0.0
        if self.kind == "linear-synthetic":
            return 0.0, 0.0
        return self.zeta_curv, self.zeta_curv

    def theta_smoothness(self, zeta):
        """Upper bound on the theta-Hessian of the batch-mean loss at fixed ``zeta``."""
        if self.is_logistic:
            z = np.atleast_2d(np.asarray(zeta, float))
            gram = np.einsum("ni,nj->ij", z, z) / z.shape[0]
            return 0.25 * float(np.linalg.eigvalsh(gram)[-1]) + self.ridge
        if self.kind == "linear-synthetic":
            return self.ridge
        return abs(self.theta_curv + self.ridge)

    def constants(self, xi_space: SampleSpace, theta_space: ParamSpace) -> LossConstants:
        """Declared constants; conservative analytic bounds from the set geometry."""
        if self.declared is not None:
            return self.declared
        T = theta_space.sup_norm()
        R = xi_space.sup_norm()
        if self.is_logistic:
            return LossConstants(
                L_tt=R * R / 4 + self.ridge,
                L_tz=T * R / 4 + 1.0,
                L_zt=T * R / 4 + 1.0,
                L_z=T,
                gamma_loss=self.ridge,
                L_zz=T * T / 4,
            )
        if self.kind == "linear-synthetic":
            return LossConstants(self.ridge, 1.0, 1.0, T, self.ridge, 0.0)
        a = self.theta_curv + self.ridge
        m = int(xi_space.mask.sum())
        b = abs(self.cross)
        return LossConstants(
            L_tt=abs(a),
            L_tz=b,
            L_zt=b,
            L_z=b * T + abs(self.zeta_curv) * R + abs(self.zeta_lin) * math.sqrt(m),
            gamma_loss=max(a, 0.0),
            L_zz=max(self.zeta_curv, 0.0),
        )


def loss_value(model: LossModel, theta, zeta, label=None):
    return model.value(theta, zeta, label)


def loss_grad_theta(model: LossModel, theta, zeta, label=None):
    return model.grad_theta(theta, zeta, label)


def loss_grad_zeta(model: LossModel, theta, zeta, label=None):
    return model.grad_zeta(theta, zeta, label)


# ---------------------------------------------------------------------------
# penalty


@dataclass(frozen=True)
class PenaltyBounds:
    lam_min: float
    lam_max: float
    L_lam: float
    H_lam: float


@dataclass(frozen=True)
class PenaltyFunction:
    """lambda(theta) = lam_c (constant) or lam_c + a |theta|^2 (quadratic)."""

    kind: str = "constant"
    lam_c: float = 1.0
    a: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "quadratic"):
            raise InvalidArgument(f"unknown penalty kind {self.kind!r}")
        if self.lam_c < 0 or self.a < 0:
            raise InvalidArgument("penalty coefficients must be nonnegative")
        if self.kind == "constant" and self.a != 0:
            raise InvalidArgument("constant penalty has a = 0")

    @classmethod
    def constant(cls, lam_c):
        return cls("constant", float(lam_c), 0.0)

    @classmethod
    def quadratic(cls, lam_c, a):
        return cls("quadratic", float(lam_c), float(a))

    def value(self, theta):
        theta = np.asarray(theta, float)
        return self.lam_c + self.a * float(theta @ theta)

    def grad(self, theta):
        return 2.0 * self.a * np.asarray(theta, float)

    def bounds(self, theta_space: ParamSpace) -> PenaltyBounds:
        if self.kind == "constant":
            return PenaltyBounds(self.lam_c, self.lam_c, 0.0, 0.0)
        lo, hi = theta_space.inf_norm(), theta_space.sup_norm()
        return PenaltyBounds(
            lam_min=self.lam_c + self.a * lo * lo,
            lam_max=self.lam_c + self.a * hi * hi,
            L_lam=2.0 * self.a * hi,
            H_lam=2.0 * self.a,
        )


# ---------------------------------------------------------------------------
# problem bundle and ledger


@dataclass(frozen=True)
class RegularityLedger:
    epsilon_sens: float
    D_xi: float
    L_tt: float
    L_tz: float
    L_zt: float
    L_z: float
    gamma_loss: float
    L_zz: float
    lam_min: float
    lam_max: float
    L_lam: float
    H_lam: float

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if math.isnan(v) or v < 0:
                raise InvalidArgument(f"ledger entry {name} must be nonnegative, got {v}")

    @property
    def mu(self):
        """Effective strong concavity of phi in zeta."""
        return 2.0 * self.lam_min - self.L_zz

    @property
    def gamma(self):
        """Effective strong convexity of phi in theta."""
        return self.gamma_loss - self.H_lam * self.D_xi ** 2

    @property
    def gamma_literal(self):
        """The alternate read-out L_tt - H_lam D^2."""
        return self.L_tt - self.H_lam * self.D_xi ** 2

    def with_epsilon(self, epsilon):
        return RegularityLedger(**{**self.__dict__, "epsilon_sens": float(epsilon)})


@dataclass(frozen=True)
class RobustProblem:
    """Everything that defines phi: loss, penalty, and the two constraint sets."""

    loss: LossModel
    penalty: PenaltyFunction
    sample_space: SampleSpace
    param_space: ParamSpace

    def ledger(self, epsilon_sens=0.0) -> RegularityLedger:
        lc = self.loss.constants(self.sample_space, self.param_space)
        pb = self.penalty.bounds(self.param_space)
        return RegularityLedger(
            epsilon_sens=float(epsilon_sens),
            D_xi=self.sample_space.diameter(),
            L_tt=lc.L_tt, L_tz=lc.L_tz, L_zt=lc.L_zt, L_z=lc.L_z,
            gamma_loss=lc.gamma_loss, L_zz=lc.L_zz,
            lam_min=pb.lam_min, lam_max=pb.lam_max, L_lam=pb.L_lam, H_lam=pb.H_lam,
        )

    def replace(self, **kw):
        d = dict(loss=self.loss, penalty=self.penalty, sample_space=self.sample_space,
                 param_space=self.param_space)
        d.update(kw)
        return RobustProblem(**d)
