"""Loss and solver configuration objects shared by prediction and losses."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace

from .entropies import Domain, EntropySpec, Family, shannon, tsallis
from .errors import InvalidParameter


class Method(str, enum.Enum):
    CLOSED_FORM = "closed_form"
    BISECTION = "bisect"
    BRENT = "brent"
    PROJECTED_GRADIENT = "pg"
    SORT_PROJECTION = "sort"


ROOT_METHODS = (Method.BISECTION, Method.BRENT)


@dataclass(frozen=True)
class SolverPolicy:
    """How to compute a regularized prediction.

    ``method=None`` lets :func:`fyloss.prediction.predict` choose: a closed
    form when one exists, Brent's method for separable entropies and
    projected gradient otherwise. ``max_iterations=None`` means 100 for the
    root finders and 5000 for projected gradient.
    """

    method: Method | None = None
    tolerance: float = 1e-9
    max_iterations: int | None = None

    def __post_init__(self):
        if self.method is not None:
            object.__setattr__(self, "method", Method(self.method))
        if not self.tolerance > 0:
            raise InvalidParameter("tolerance must be positive")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise InvalidParameter("max_iterations must be >= 1")

    def budget(self, method):
        if self.max_iterations is not None:
            return self.max_iterations
        return 5000 if method is Method.PROJECTED_GRADIENT else 100

    def to_dict(self):
        return {
            "method": None if self.method is None else self.method.value,
            "tolerance": self.tolerance,
            "max_iterations": self.max_iterations,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


# --------------------------------------------------------------------------
# regularizers

@dataclass(frozen=True)
class NegEntropy:
    """``scale * (-H)`` for a generalized entropy ``H``."""

    entropy: EntropySpec
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise InvalidParameter("scale must be positive")


@dataclass(frozen=True)
class SquaredL2:
    """``scale * ||p||^2 / 2``."""

    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise InvalidParameter("scale must be positive")


@dataclass(frozen=True)
class Zero:
    """The zero regularizer on the simplex (perceptron)."""


@dataclass(frozen=True)
class HingeLinear:
    """``<p, e_k - 1>`` on the simplex; depends on the true label ``k``."""


Regularizer = NegEntropy | SquaredL2 | Zero | HingeLinear


def scaled(reg, t):
    """Return the regularizer ``t * reg``."""
    if isinstance(reg, (NegEntropy, SquaredL2)):
        return replace(reg, scale=reg.scale * t)
    if isinstance(reg, Zero):
        return reg
    raise InvalidParameter(f"{type(reg).__name__} cannot be rescaled")


@dataclass(frozen=True)
class FyLossSpec:
    regularizer: Regularizer
    domain: Domain = Domain.SIMPLEX
    solver: SolverPolicy = field(default_factory=SolverPolicy)

    def __post_init__(self):
        object.__setattr__(self, "domain", Domain(self.domain))
        reg, dom = self.regularizer, self.domain
        if isinstance(reg, (Zero, HingeLinear)) and dom is not Domain.SIMPLEX:
            raise InvalidParameter(f"{type(reg).__name__} requires the simplex")
        if isinstance(reg, SquaredL2) and dom is Domain.BOX:
            raise InvalidParameter("squared regularizer supports simplex or full space")
        if isinstance(reg, NegEntropy) and reg.entropy.domain is not dom:
            raise InvalidParameter("entropy domain and loss domain disagree")

    @property
    def strictly_convex(self):
        return not isinstance(self.regularizer, (Zero, HingeLinear))

    def with_solver(self, **kwargs):
        return replace(self, solver=replace(self.solver, **kwargs))

    def to_dict(self):
        reg = self.regularizer
        if isinstance(reg, NegEntropy):
            out = {"regularizer": "neg_entropy", "entropy": reg.entropy.to_dict()}
            if reg.scale != 1.0:
                out["scale"] = reg.scale
        elif isinstance(reg, SquaredL2):
            out = {"regularizer": "squared_l2"}
            if reg.scale != 1.0:
                out["scale"] = reg.scale
        elif isinstance(reg, Zero):
            out = {"regularizer": "zero"}
        else:
            out = {"regularizer": "hinge"}
        out["domain"] = self.domain.value
        out["solver"] = self.solver.to_dict()
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "loss" in data:
            name = data.pop("loss")
            preset = PRESETS.get(name)
            if preset is None:
                raise InvalidParameter(f"unknown loss preset {name!r}")
            spec = preset(**data.pop("params", {}))
            if "solver" in data:
                spec = replace(spec, solver=SolverPolicy.from_dict(data.pop("solver")))
            if data:
                raise InvalidParameter(f"unknown keys: {sorted(data)}")
            return spec
        kind = data.pop("regularizer")
        scale = float(data.pop("scale", 1.0))
        if kind == "neg_entropy":
            reg = NegEntropy(EntropySpec.from_dict(data.pop("entropy")), scale)
        elif kind == "squared_l2":
            reg = SquaredL2(scale)
        elif kind == "zero":
            reg = Zero()
        elif kind == "hinge":
            reg = HingeLinear()
        else:
            raise InvalidParameter(f"unknown regularizer {kind!r}")
        domain = data.pop("domain", Domain.SIMPLEX)
        solver = SolverPolicy.from_dict(data.pop("solver", {}))
        if data:
            raise InvalidParameter(f"unknown keys: {sorted(data)}")
        return cls(reg, domain, solver)

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


# --------------------------------------------------------------------------
# the classic losses

def logistic_loss():
    return FyLossSpec(NegEntropy(shannon()))


def sparsemax_loss():
    return FyLossSpec(NegEntropy(tsallis(2.0)))


def tsallis_loss(alpha):
    """Tsallis loss; ``alpha == 1`` gives the logistic loss."""
    if alpha == 1:
        return logistic_loss()
    return FyLossSpec(NegEntropy(tsallis(alpha)))


def entropy_loss(entropy):
    return FyLossSpec(NegEntropy(entropy), entropy.domain)


def perceptron_loss():
    return FyLossSpec(Zero())


def hinge_loss():
    return FyLossSpec(HingeLinear())


def squared_loss():
    return FyLossSpec(SquaredL2(), Domain.FULL)


def one_vs_all_logistic_loss():
    return FyLossSpec(NegEntropy(shannon(Domain.BOX)), Domain.BOX)


PRESETS = {
    "logistic": logistic_loss,
    "sparsemax": sparsemax_loss,
    "tsallis": tsallis_loss,
    "perceptron": perceptron_loss,
    "hinge": hinge_loss,
    "squared": squared_loss,
    "ova_logistic": one_vs_all_logistic_loss,
}


def is_shannon(reg):
    return isinstance(reg, NegEntropy) and reg.entropy.family is Family.SHANNON
