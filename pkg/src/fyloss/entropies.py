"""Generalized entropies on the probability simplex.

An entropy is described by an immutable :class:`EntropySpec`. Everything else
in the package consumes entropies through the functions defined here:
``entropy_value``, the pointwise generator ``pointwise_h`` of separable
families together with its derivative and inverse derivative, and
``entropy_gradient``.

Supported families::

    shannon        H(p) = -sum_j p_j log p_j
    tsallis        H(p) = sum_j (p_j - p_j^a) / (a (a - 1)),   a > 1
    norm           H(p) = 1 - ||p||_q,                         q > 1
    squared_norm   H(p) = (1 - ||p||_q^2) / 2,                 q > 1
    renyi          H(p) = log(sum_j p_j^b) / (1 - b),          0 < b <= 1

New families are added by extending :class:`Family` and the dispatch in each
function below; there is no plugin loading.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BoundaryGradientUndefined,
    DomainViolation,
    InvalidParameter,
    NotSeparable,
    OutOfRange,
)

SUM_TOL = 1e-9
NONNEG_TOL = 1e-12
INVERSE_TOL = 1e-12


class Family(str, enum.Enum):
    SHANNON = "shannon"
    TSALLIS = "tsallis"
    NORM = "norm"
    SQUARED_NORM = "squared_norm"
    RENYI = "renyi"


class Domain(str, enum.Enum):
    SIMPLEX = "simplex"
    BOX = "box"
    FULL = "full"


_PARAM_OF = {
    Family.SHANNON: None,
    Family.TSALLIS: "alpha",
    Family.NORM: "q",
    Family.SQUARED_NORM: "q",
    Family.RENYI: "beta",
}


@dataclass(frozen=True)
class EntropySpec:
    """A generalized entropy ``H`` (the regularizer is ``-H``).

    Only the parameter belonging to ``family`` may be set. A Renyi entropy
    with ``beta == 1`` is normalized to Shannon at construction.
    """

    family: Family
    alpha: float | None = None
    q: float | None = None
    beta: float | None = None
    domain: Domain = Domain.SIMPLEX

    def __post_init__(self):
        try:
            family = Family(self.family)
            domain = Domain(self.domain)
        except ValueError as exc:
            raise InvalidParameter(str(exc)) from None
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "domain", domain)

        wanted = _PARAM_OF[family]
        for name in ("alpha", "q", "beta"):
            value = getattr(self, name)
            if name != wanted and value is not None:
                raise InvalidParameter(f"{name} does not apply to {family.value}")
        if wanted is not None:
            value = getattr(self, wanted)
            if value is None:
                raise InvalidParameter(f"{family.value} requires {wanted}")
            value = float(value)
            object.__setattr__(self, wanted, value)
            if not math.isfinite(value):
                raise InvalidParameter(f"{wanted} must be finite")

        if family is Family.TSALLIS and not self.alpha > 1:
            raise InvalidParameter("tsallis alpha must be > 1 (use shannon for alpha = 1)")
        if family in (Family.NORM, Family.SQUARED_NORM) and not self.q > 1:
            raise InvalidParameter(f"{family.value} q must be > 1")
        if family is Family.RENYI:
            if not 0 < self.beta <= 1:
                raise InvalidParameter("renyi beta must lie in (0, 1]")
            if self.beta == 1:
                object.__setattr__(self, "family", Family.SHANNON)
                object.__setattr__(self, "beta", None)

        if domain is Domain.FULL:
            raise InvalidParameter("entropies are defined on the simplex or the box")
        if domain is Domain.BOX and self.family is not Family.SHANNON:
            raise InvalidParameter("only the shannon entropy is supported on the box")

    @property
    def separable(self) -> bool:
        return self.family in (Family.SHANNON, Family.TSALLIS)

    @property
    def parameter(self) -> float | None:
        name = _PARAM_OF[self.family]
        return None if name is None else getattr(self, name)

    def to_dict(self) -> dict:
        out = {"family": self.family.value}
        name = _PARAM_OF[self.family]
        if name is not None:
            out[name] = getattr(self, name)
        if self.domain is not Domain.SIMPLEX:
            out["domain"] = self.domain.value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "EntropySpec":
        allowed = {"family", "alpha", "q", "beta", "domain"}
        unknown = set(data) - allowed
        if unknown:
            raise InvalidParameter(f"unknown keys: {sorted(unknown)}")
        if "family" not in data:
            raise InvalidParameter("missing 'family'")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "EntropySpec":
        return cls.from_dict(json.loads(text))

    def __str__(self):
        name = _PARAM_OF[self.family]
        if name is None:
            return self.family.value
        return f"{self.family.value}({name}={getattr(self, name):g})"


def shannon(domain=Domain.SIMPLEX):
    return EntropySpec(Family.SHANNON, domain=domain)


def tsallis(alpha):
    return EntropySpec(Family.TSALLIS, alpha=alpha)


def norm(q):
    return EntropySpec(Family.NORM, q=q)


def squared_norm(q):
    return EntropySpec(Family.SQUARED_NORM, q=q)


def renyi(beta):
    return EntropySpec(Family.RENYI, beta=beta)


# --------------------------------------------------------------------------
# validation

def check_scores(theta):
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 0 or theta.shape[-1] == 0:
        raise DomainViolation("score vector must be non-empty")
    if not np.all(np.isfinite(theta)):
        raise DomainViolation("score vector has non-finite entries")
    return theta


def check_probability(p, domain=Domain.SIMPLEX):
    """Validate ``p`` (last axis) against ``domain`` and return it as floats.

    Infeasible inputs raise; nothing is renormalized.
    """
    p = np.asarray(p, dtype=float)
    domain = Domain(domain)
    if p.ndim == 0 or p.shape[-1] == 0:
        raise DomainViolation("probability vector must be non-empty")
    if not np.all(np.isfinite(p)):
        raise DomainViolation("probability vector has non-finite entries")
    if domain is Domain.FULL:
        return p
    if np.any(p < -NONNEG_TOL):
        raise DomainViolation(f"negative entry {p.min():.3g}")
    if domain is Domain.BOX:
        if np.any(p > 1 + NONNEG_TOL):
            raise DomainViolation(f"entry {p.max():.3g} exceeds 1")
        return p
    excess = np.abs(p.sum(axis=-1) - 1.0)
    if np.any(excess > SUM_TOL):
        raise DomainViolation(f"entries sum to 1 +- {excess.max():.3g}")
    return p


# --------------------------------------------------------------------------
# separable generators

def _require_separable(spec):
    if not spec.separable:
        raise NotSeparable(f"{spec} has no pointwise generator")


def _tsallis_h(a, t):
    # (t - t^a) / (a (a - 1)) rewritten with expm1 to stay accurate as a -> 1
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -t * np.expm1((a - 1) * np.log(t)) / (a * (a - 1))
    return np.where(t > 0, out, 0.0)


def _tsallis_h_prime(a, t):
    with np.errstate(divide="ignore"):
        return -1.0 / a - np.expm1((a - 1) * np.log(t)) / (a - 1)


def _shannon_h(t):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(t > 0, -t * np.log(t), 0.0)


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


def pointwise_h(spec: EntropySpec, t):
    """Generator ``h`` with ``H(p) = sum_j h(p_j)``."""
    _require_separable(spec)
    arr = np.asarray(t, dtype=float)
    if np.any(arr < -NONNEG_TOL) or np.any(arr > 1 + NONNEG_TOL):
        raise DomainViolation("generator argument must lie in [0, 1]")
    arr = np.clip(arr, 0.0, 1.0)
    if spec.family is Family.SHANNON:
        out = _shannon_h(arr)
    else:
        out = _tsallis_h(spec.alpha, arr)
    return _scalar_or_array(out, t)


def pointwise_h_prime(spec: EntropySpec, t):
    """Derivative of the generator; ``+inf`` at ``t = 0`` for Shannon."""
    _require_separable(spec)
    arr = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    if spec.family is Family.SHANNON:
        with np.errstate(divide="ignore"):
            out = np.where(arr > 0, -1.0 - np.log(np.where(arr > 0, arr, 1.0)), math.inf)
    else:
        out = _tsallis_h_prime(spec.alpha, arr)
    return _scalar_or_array(out, t)


def h_prime_bounds(spec: EntropySpec):
    """Return ``(h'(1), h'(0))``, the range of the generator derivative."""
    _require_separable(spec)
    if spec.family is Family.SHANNON:
        return -1.0, math.inf
    a = spec.alpha
    return -1.0 / a, 1.0 / (a * (a - 1))


def pointwise_h_prime_inverse(spec: EntropySpec, u, *, clamp=False):
    """Invert ``h'`` on ``[h'(1), h'(0)]``.

    Arguments within 1e-12 outside the range are clamped; anything further
    out raises :class:`OutOfRange` unless ``clamp`` is set, in which case the
    argument is clamped unconditionally. The endpoints map exactly to 1 and 0.
    """
    _require_separable(spec)
    lo, hi = h_prime_bounds(spec)
    arr = np.asarray(u, dtype=float)
    if not clamp and (np.any(arr < lo - INVERSE_TOL) or np.any(arr > hi + INVERSE_TOL)):
        raise OutOfRange(f"argument outside [{lo:g}, {hi:g}]")
    arr = np.clip(arr, lo, hi)
    if spec.family is Family.SHANNON:
        out = np.exp(-1.0 - arr)
    else:
        a = spec.alpha
        # rounding at the upper end can push the log1p argument below -1;
        # those entries are overwritten by the endpoint values below
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.exp(np.log1p(-(a - 1) * (arr + 1.0 / a)) / (a - 1))
    out = np.where(arr <= lo, 1.0, np.where(arr >= hi, 0.0, out))
    return _scalar_or_array(out, u)


# --------------------------------------------------------------------------
# entropy values and gradients

def _entropy(spec, p):
    """Row-wise entropy over the last axis, no validation."""
    fam = spec.family
    if fam is Family.SHANNON:
        if spec.domain is Domain.BOX:
            return (_shannon_h(p) + _shannon_h(1.0 - p)).sum(axis=-1)
        return _shannon_h(p).sum(axis=-1)
    if fam is Family.TSALLIS:
        return _tsallis_h(spec.alpha, p).sum(axis=-1)
    if fam is Family.NORM:
        return 1.0 - (p ** spec.q).sum(axis=-1) ** (1.0 / spec.q)
    if fam is Family.SQUARED_NORM:
        return 0.5 * (1.0 - (p ** spec.q).sum(axis=-1) ** (2.0 / spec.q))
    b = spec.beta
    return np.log((p ** b).sum(axis=-1)) / (1.0 - b)


def entropy_value(spec: EntropySpec, p):
    """Evaluate ``H(p)``; rows of a 2-D input are evaluated independently."""
    p = check_probability(p, spec.domain)
    p = np.clip(p, 0.0, 1.0)
    out = _entropy(spec, p)
    return float(out) if np.ndim(out) == 0 else out


def _gradient(spec, p):
    fam = spec.family
    if fam is Family.SHANNON:
        if spec.domain is Domain.BOX:
            if np.any((p <= 0) | (p >= 1)):
                raise BoundaryGradientUndefined("binary entropy gradient needs p in (0, 1)")
            return np.log1p(-p) - np.log(p)
        if np.any(p <= 0):
            raise BoundaryGradientUndefined("shannon gradient is infinite at zero coordinates")
        return -1.0 - np.log(p)
    if fam is Family.TSALLIS:
        return _tsallis_h_prime(spec.alpha, p)
    q = spec.q
    nrm = np.sum(p ** q, axis=-1, keepdims=True) ** (1.0 / q)
    if fam is Family.NORM:
        return -((p / nrm) ** (q - 1))
    if fam is Family.SQUARED_NORM:
        return -(nrm ** (2 - q)) * p ** (q - 1)
    raise AssertionError(fam)


def entropy_gradient(spec: EntropySpec, p):
    """Return ``grad H(p)``.

    Shannon and Renyi (``beta < 1``) gradients blow up at zero coordinates;
    there :class:`BoundaryGradientUndefined` is raised.
    """
    p = np.clip(check_probability(p, spec.domain), 0.0, 1.0)
    if spec.family is Family.RENYI:
        if np.any(p <= 0):
            raise BoundaryGradientUndefined("renyi gradient is infinite at zero coordinates")
        b = spec.beta
        pb = p ** b
        return b * pb / p / ((1.0 - b) * pb.sum(axis=-1, keepdims=True))
    return _gradient(spec, p)


def raw_gradient(spec: EntropySpec, p, cap=None):
    """Gradient without validation, for solvers working on their own iterates.

    Coordinates where the gradient is infinite are replaced by ``cap`` when
    one is given.
    """
    p = np.clip(p, 0.0, 1.0)
    if spec.family is Family.RENYI:
        b = spec.beta
        pb = p ** b
        with np.errstate(divide="ignore"):
            g = b * p ** (b - 1) / ((1.0 - b) * pb.sum(axis=-1, keepdims=True))
    elif spec.family is Family.SHANNON:
        with np.errstate(divide="ignore"):
            g = -1.0 - np.log(p)
    else:
        g = _gradient(spec, p)
    if cap is not None:
        g = np.minimum(g, cap)
    return g
