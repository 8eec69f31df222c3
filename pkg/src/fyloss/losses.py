"""Fenchel-Young losses ``L(theta; y) = Omega*(theta) + Omega(y) - <theta, y>``.

The conjugate is always evaluated through the prediction,
``Omega*(theta) = <theta, yhat> - Omega(yhat)``; the per-family closed forms
in :func:`conjugate_closed_form` exist to cross-check that route. When the
prediction comes from root finding its mass is only 1 up to the solver
tolerance, so the value is taken from the Lagrangian
``<theta, p> - Omega(p) - tau (sum(p) - 1)`` instead, whose error is
quadratic in the mass residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .entropies import (
    Domain,
    EntropySpec,
    Family,
    check_probability,
    check_scores,
    entropy_gradient,
    entropy_value,
    _entropy,
)
from .errors import DomainViolation, OneHotRequired
from .prediction import argmax_vertex, predict, predict_rows_tau
from .specs import FyLossSpec, HingeLinear, NegEntropy, SolverPolicy, SquaredL2, Zero

ONE_HOT_TOL = 1e-12


@dataclass
class LossEvaluation:
    value: float
    gradient: np.ndarray
    prediction: np.ndarray
    conjugate: float
    subgradient: bool = False

    def to_dict(self):
        return {
            "value": self.value,
            "gradient": self.gradient.tolist(),
            "prediction": self.prediction.tolist(),
            "conjugate": self.conjugate,
            "subgradient": self.subgradient,
        }


def one_hot_label(y):
    """Index ``k`` of a one-hot vector ``y``; raises if ``y`` is not one-hot."""
    y = np.asarray(y, dtype=float)
    k = int(np.argmax(y))
    rest = np.delete(y, k)
    if abs(y[k] - 1.0) > ONE_HOT_TOL or np.any(np.abs(rest) > ONE_HOT_TOL):
        raise OneHotRequired("target must be a one-hot vector")
    return k


def _reg_value(reg, p, domain, label=None, validate=True):
    if validate:
        p = check_probability(p, domain)
    if isinstance(reg, NegEntropy):
        if validate:
            return -reg.scale * entropy_value(reg.entropy, p)
        return -reg.scale * float(_entropy(reg.entropy, np.clip(p, 0.0, 1.0)))
    if isinstance(reg, SquaredL2):
        return 0.5 * reg.scale * float(p @ p)
    if isinstance(reg, Zero):
        return 0.0
    if label is None:
        raise OneHotRequired("the hinge regularizer needs the true label")
    return float(p[label] - p.sum())


def regularizer_value(spec: FyLossSpec, p, label=None):
    """``Omega(p)``; ``label`` is only used by the hinge regularizer."""
    return _reg_value(spec.regularizer, p, spec.domain, label)


def conjugate_value(spec: FyLossSpec, theta, policy: SolverPolicy | None = None,
                    label=None):
    """``Omega*(theta)`` through the variational form."""
    theta = check_scores(theta)
    pred = predict(spec, theta, policy, label=label)
    p = pred.p
    return (float(theta @ p) - _reg_value(spec.regularizer, p, spec.domain, label, validate=False)
            - float(_mass_correction(pred.tau, p)))


def conjugate_closed_form(spec: FyLossSpec, theta):
    """Closed-form conjugate where one is known, else ``None``.

    log-sum-exp for Shannon on the simplex, sum of softplus on the box, max
    for the zero regularizer and ``||theta||^2 / (2 s)`` for the squared
    regularizer on the full space.
    """
    theta = check_scores(theta)
    reg = spec.regularizer
    if isinstance(reg, Zero):
        return float(theta.max())
    if isinstance(reg, SquaredL2) and spec.domain is Domain.FULL:
        return float(theta @ theta) / (2.0 * reg.scale)
    if isinstance(reg, NegEntropy) and reg.entropy.family is Family.SHANNON:
        s = reg.scale
        if spec.domain is Domain.BOX:
            return float(s * np.logaddexp(0.0, theta / s).sum())
        m = theta.max()
        return float(m + s * np.log(np.exp((theta - m) / s).sum()))
    return None


def _mass_correction(tau, p):
    if tau is None:
        return 0.0
    return tau * (np.sum(p, axis=-1) - 1.0)


def _hinge(theta, y):
    k = one_hot_label(y)
    cost = np.ones_like(theta)
    cost[k] = 0.0
    aug = theta + cost
    pred = argmax_vertex(aug)
    conj = float(aug.max())
    value = conj - float(theta[k])
    return LossEvaluation(value, pred - y, pred, conj, subgradient=True)


def loss_value(spec: FyLossSpec, theta, y, policy: SolverPolicy | None = None) -> LossEvaluation:
    """Loss, gradient ``yhat - y``, prediction and conjugate at ``(theta, y)``."""
    theta = check_scores(theta)
    y = check_probability(y, spec.domain)
    if y.shape != theta.shape:
        raise DomainViolation(f"shape mismatch {theta.shape} vs {y.shape}")
    reg = spec.regularizer
    if isinstance(reg, HingeLinear):
        return _hinge(theta, y)
    if isinstance(reg, Zero):
        one_hot_label(y)
    pred = predict(spec, theta, policy)
    p = pred.p
    conj = (float(theta @ p) - _reg_value(reg, p, spec.domain, validate=False)
            - float(_mass_correction(pred.tau, p)))
    value = conj + _reg_value(reg, y, spec.domain) - float(theta @ y)
    return LossEvaluation(value, p - y, p, conj, subgradient=not spec.strictly_convex)


def loss_gradient(spec: FyLossSpec, theta, y, policy: SolverPolicy | None = None):
    """``yhat(theta) - y``; a subgradient for the zero and hinge regularizers."""
    return loss_value(spec, theta, y, policy).gradient


def temperature_scaled_loss(spec: FyLossSpec, t, theta, y, policy: SolverPolicy | None = None):
    """``t * L(theta / t; y)``, which equals the loss generated by ``t * Omega``."""
    if not t > 0:
        raise ValueError("temperature must be positive")
    theta = check_scores(theta)
    return t * loss_value(spec, theta / t, y, policy).value


def loss_rows(spec: FyLossSpec, theta, y, policy: SolverPolicy | None = None):
    """Row-wise losses and predictions for score and target matrices."""
    theta = np.atleast_2d(check_scores(theta))
    y = np.atleast_2d(check_probability(y, spec.domain))
    if y.shape != theta.shape:
        raise DomainViolation(f"shape mismatch {theta.shape} vs {y.shape}")
    reg = spec.regularizer
    if isinstance(reg, HingeLinear):
        evals = [_hinge(t, yy) for t, yy in zip(theta, y)]
        return np.array([e.value for e in evals]), np.stack([e.prediction for e in evals])
    if isinstance(reg, Zero):
        for row in y:
            one_hot_label(row)
    p, tau = predict_rows_tau(spec, theta, policy)
    inner = (np.einsum("ij,ij->i", theta, p) - np.einsum("ij,ij->i", theta, y)
             - _mass_correction(tau, p))
    if isinstance(reg, NegEntropy):
        ent = reg.entropy
        omega = -reg.scale * (_entropy(ent, np.clip(p, 0.0, 1.0)) - _entropy(ent, np.clip(y, 0.0, 1.0)))
    elif isinstance(reg, SquaredL2):
        omega = 0.5 * reg.scale * ((p * p).sum(axis=1) - (y * y).sum(axis=1))
    else:
        omega = 0.0
    return inner - omega, p


# --------------------------------------------------------------------------
# Bregman divergences

def bregman_divergence(spec: EntropySpec, y, p):
    """``B(y || p)`` generated by ``Omega = -H``."""
    y = check_probability(y, spec.domain)
    p = check_probability(p, spec.domain)
    grad = entropy_gradient(spec, p)
    return float(-entropy_value(spec, y) + entropy_value(spec, p) + grad @ (y - p))


def bregman_bound_check(spec: EntropySpec, theta, y, policy: SolverPolicy | None = None):
    """Return ``(B(y || yhat(theta)), L(theta; y))``.

    The first never exceeds the second; they coincide when the loss is zero
    and, for Shannon, everywhere.
    """
    loss_spec = FyLossSpec(NegEntropy(spec), spec.domain)
    ev = loss_value(loss_spec, theta, y, policy)
    p = ev.prediction
    if spec.domain is Domain.SIMPLEX:
        p = np.clip(p, 0.0, None)
        p = p / p.sum()
    return bregman_divergence(spec, y, p), ev.value
