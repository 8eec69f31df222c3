"""Separation margins of entropy-generated losses.

Three independent routes to the same number:

* ``margin_closed_form``: ``grad_j H(e_k) - grad_k H(e_k)``, which for a
  separable entropy is ``h'(0) - h'(1)``;
* ``margin_brute_force``: the supremum of ``H(p) / (1 - max(p))`` over the
  one-parameter family ``p(t) = (1 - t, t/(d-1), ..., t/(d-1))``;
* ``margin_empirical``: the smallest score gap ``g`` for which
  ``theta = g e_k`` is mapped exactly onto the vertex ``e_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .entropies import EntropySpec, Family, entropy_gradient, h_prime_bounds, _tsallis_h
from .errors import BoundaryGradientUndefined, MarginViolated
from .losses import loss_value
from .prediction import predict
from .specs import FyLossSpec, NegEntropy, SolverPolicy

# smallest t on the brute-force grid; the ratio for alpha close to 1
# converges like t^(alpha - 1), so the grid must reach far below 1e-16
T_MIN = 1e-300


@dataclass
class MarginReport:
    closed_form: float
    brute_force: float
    empirical_zero_at: float | None = None

    def to_dict(self):
        return {
            "closed_form": self.closed_form,
            "brute_force": self.brute_force,
            "empirical_zero_at": self.empirical_zero_at,
        }


def margin_closed_form(spec: EntropySpec) -> float:
    """Margin of ``L_{-H}``; ``math.inf`` when the loss has none."""
    if spec.separable:
        lo, hi = h_prime_bounds(spec)
        return hi - lo
    e = np.array([1.0, 0.0])
    try:
        g = entropy_gradient(spec, e)
    except BoundaryGradientUndefined:
        return math.inf
    return float(g[1] - g[0])


def vertex_family_entropy(spec: EntropySpec, t, d):
    """``H(1 - t, t/(d-1), ..., t/(d-1))`` evaluated without forming ``1 - t``.

    Written with log1p/expm1 so that the result keeps full relative
    precision for ``t`` far below machine epsilon.
    """
    t = np.asarray(t, dtype=float)
    r = t / (d - 1)
    fam = spec.family
    if fam is Family.SHANNON:
        return -(1 - t) * np.log1p(-t) - t * np.log(r)
    if fam is Family.TSALLIS:
        a = spec.alpha
        head = -(1 - t) * np.expm1((a - 1) * np.log1p(-t)) / (a * (a - 1))
        return head + (d - 1) * _tsallis_h(a, r)
    power = spec.beta if fam is Family.RENYI else spec.q
    # sum_j p_j^power - 1
    excess = np.expm1(power * np.log1p(-t)) + (d - 1) * r ** power
    if fam is Family.RENYI:
        return np.log1p(excess) / (1 - power)
    log_norm = np.log1p(excess) / power
    if fam is Family.NORM:
        return -np.expm1(log_norm)
    return -0.5 * np.expm1(2 * log_norm)


def brute_force_grid(d, grid):
    """Geometric grid of ``grid`` points on ``[T_MIN, 1 - 1/d]``.

    A grid of ``2 * grid - 1`` points contains this one (up to rounding).
    """
    return np.exp(np.linspace(math.log(T_MIN), math.log1p(-1.0 / d), grid))


def margin_brute_force(spec: EntropySpec, d: int, grid: int = 100_000) -> float:
    """Grid maximum of ``H(p(t)) / t``; diverges for entropies without a margin."""
    if d < 2:
        raise ValueError("d must be at least 2")
    if grid < 100:
        raise ValueError("grid must have at least 100 points")
    t = brute_force_grid(d, grid)
    ratio = vertex_family_entropy(spec, t, d) / t
    return float(np.max(ratio))


def _is_vertex(loss_spec, theta, k, policy):
    p = predict(loss_spec, theta, policy).p
    return np.count_nonzero(p) == 1 and p[k] > 0


def margin_empirical(spec: EntropySpec, d: int, trials: int = 100, seed=0,
                     policy: SolverPolicy | None = None, rel_tol=1e-9) -> float:
    """Empirical margin, checked in both directions.

    For ``trials`` random ``(theta, k)`` with ``theta_k = max_{j != k}
    theta_j + m (1 + 1e-9)`` (``m`` the closed-form margin) the loss must vanish (up to
    1e-9), and ``theta = 0.95 m e_k`` must not be mapped to the vertex ``e_k``.
    Either failure raises :class:`MarginViolated`. Returns the gap, located by
    bisection on ``theta = g e_k``, at which the prediction becomes ``e_k``.
    """
    m = margin_closed_form(spec)
    if not math.isfinite(m):
        raise ValueError(f"{spec} has no separation margin")
    loss_spec = FyLossSpec(NegEntropy(spec), spec.domain)
    rng = np.random.default_rng(seed)

    for _ in range(trials):
        k = int(rng.integers(d))
        theta = rng.normal(size=d)
        # the relative 1e-9 absorbs rounding of theta_k - theta_j exactly at
        # the boundary, which p(tau) amplifies as eps^(1/(alpha-1))
        theta[k] = np.delete(theta, k).max() + m * (1 + 1e-9)
        y = np.zeros(d)
        y[k] = 1.0
        value = loss_value(loss_spec, theta, y, policy).value
        if value > 1e-9:
            raise MarginViolated(f"loss {value:.3g} > 0 at gap {m:g} for {spec}")

    k = int(rng.integers(d))
    e_k = np.zeros(d)
    e_k[k] = 1.0
    if _is_vertex(loss_spec, 0.95 * m * e_k, k, policy):
        raise MarginViolated(f"zero loss already at gap {0.95 * m:g} for {spec}")

    lo, hi = 0.95 * m, m * (1 + 1e-9)
    if not _is_vertex(loss_spec, hi * e_k, k, policy):
        raise MarginViolated(f"no zero loss at gap {m:g} for {spec}")
    while hi - lo > rel_tol * m:
        mid = 0.5 * (lo + hi)
        if _is_vertex(loss_spec, mid * e_k, k, policy):
            hi = mid
        else:
            lo = mid
    return hi


def margin_report(spec: EntropySpec, d=3, grid=100_000, trials=20, seed=0) -> MarginReport:
    closed = margin_closed_form(spec)
    brute = margin_brute_force(spec, d, grid)
    empirical = margin_empirical(spec, d, trials, seed) if math.isfinite(closed) else None
    return MarginReport(closed, brute, empirical)
