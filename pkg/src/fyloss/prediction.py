"""Regularized prediction functions.

``predict`` returns ``argmax_p <theta, p> - Omega(p)`` for every regularizer
in :mod:`fyloss.specs`. Closed forms cover argmax, softmax, sparsemax, sigmoid
and the identity; separable entropies reduce to a one-dimensional root
finding problem in the threshold ``tau``; everything else falls back to an
accelerated projected gradient method on the simplex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .entropies import (
    Domain,
    EntropySpec,
    Family,
    check_scores,
    h_prime_bounds,
    pointwise_h_prime,
    pointwise_h_prime_inverse,
    raw_gradient,
    _entropy,
)
from .errors import NoConvergence, OneHotRequired, SolverMismatch
from .specs import (
    ROOT_METHODS,
    FyLossSpec,
    HingeLinear,
    Method,
    NegEntropy,
    SolverPolicy,
    SquaredL2,
    Zero,
)

EPS = np.finfo(float).eps

# smallest floor used by projected gradient for entropies whose gradient is
# infinite at zero coordinates
INTERIOR_FLOOR = 1e-300


@dataclass
class PredictionResult:
    p: np.ndarray
    tau: float | None = None
    iterations: int = 0
    residual: float = 0.0
    method: Method = Method.CLOSED_FORM

    @property
    def support(self):
        return np.flatnonzero(self.p > 0)

    def to_dict(self):
        return {
            "p": self.p.tolist(),
            "tau": self.tau,
            "iterations": self.iterations,
            "residual": self.residual,
            "method": self.method.value,
        }


# --------------------------------------------------------------------------
# closed forms

def softmax(theta):
    theta = np.asarray(theta, dtype=float)
    z = np.exp(theta - theta.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def sigmoid(theta):
    theta = np.asarray(theta, dtype=float)
    # two branches so that exp never overflows
    pos = theta >= 0
    z = np.exp(-np.abs(theta))
    return np.where(pos, 1.0 / (1.0 + z), z / (1.0 + z))


def argmax_vertex(theta):
    theta = np.asarray(theta, dtype=float)
    out = np.zeros_like(theta)
    idx = np.argmax(theta, axis=-1)
    np.put_along_axis(out, np.expand_dims(idx, -1), 1.0, axis=-1)
    return out


def sparsemax_threshold(theta):
    """Threshold ``tau`` of the Euclidean simplex projection (sort rule)."""
    theta = np.asarray(theta, dtype=float)
    d = theta.shape[-1]
    u = -np.sort(-theta, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    k = np.arange(1, d + 1)
    cond = u - css / k > 0
    rho = np.count_nonzero(cond, axis=-1)
    return np.take_along_axis(css, np.expand_dims(rho - 1, -1), axis=-1)[..., 0] / rho


def sparsemax_exact(theta):
    """Euclidean projection of ``theta`` onto the simplex, by sorting."""
    theta = np.asarray(theta, dtype=float)
    tau = sparsemax_threshold(theta)
    return np.maximum(theta - np.expand_dims(tau, -1), 0.0)


def project_simplex(x, floor=0.0):
    """Projection onto ``{p : p >= floor, sum(p) = 1}``."""
    if floor == 0.0:
        return sparsemax_exact(x)
    d = x.shape[-1]
    mass = 1.0 - d * floor
    return floor + mass * sparsemax_exact((x - floor) / mass)


# --------------------------------------------------------------------------
# root finding for separable entropies

def _check_root_spec(spec):
    if not spec.separable:
        raise SolverMismatch(f"root finding needs a separable entropy, got {spec}")
    if spec.family is Family.SHANNON:
        raise SolverMismatch("h'(0) is infinite for shannon; use the softmax closed form")


def p_of_tau(spec, theta, tau, scale=1.0):
    """Primal point ``p(tau)`` with ``p_j = (h')^{-1}((tau - theta_j) / scale)``.

    The argument is clamped to ``[h'(1), h'(0)]`` before inversion, so
    coordinates with ``tau - theta_j >= scale * h'(0)`` are exactly zero.
    """
    u = (np.expand_dims(tau, -1) - theta) / scale
    return pointwise_h_prime_inverse(spec, u, clamp=True)


def phi(spec: EntropySpec, theta, tau, scale=1.0):
    """Primal infeasibility ``sum_j p_j(tau) - 1``; nonincreasing in ``tau``."""
    _check_root_spec(spec)
    theta = check_scores(theta)
    out = p_of_tau(spec, theta, tau, scale).sum(axis=-1) - 1.0
    return float(out) if np.ndim(out) == 0 else out


def root_bracket(spec: EntropySpec, theta, scale=1.0):
    """``(tau_min, tau_max)`` with ``phi(tau_min) >= 0 >= phi(tau_max)``."""
    _check_root_spec(spec)
    theta = np.asarray(theta, dtype=float)
    d = theta.shape[-1]
    top = theta.max(axis=-1)
    lo = top + scale * h_prime_bounds(spec)[0]
    hi = top + scale * pointwise_h_prime(spec, 1.0 / d)
    return lo, hi


def _bisect(f, lo, hi, tol, budget):
    """Halve ``[lo, hi]`` keeping ``f(lo) >= 0 >= f(hi)`` until ``|f| <= tol``.

    Returns ``(tau, f(tau), iterations, status, (other, f(other)))`` where
    ``status`` is ``"ok"``, ``"budget"`` or ``"collapsed"`` (the bracket
    reached adjacent floats); ``other`` is the far end of the final bracket.
    """
    tau = 0.5 * (lo + hi)
    val = f(tau)
    f_lo = f_hi = None
    it = 0
    while abs(val) > tol:
        if it >= budget:
            return tau, val, it, "budget", None
        if val < 0:
            hi, f_hi = tau, val
        else:
            lo, f_lo = tau, val
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            other = (hi, f_hi) if val >= 0 else (lo, f_lo)
            if other[1] is None:
                other = (other[0], f(other[0]))
            return tau, val, it, "collapsed", other
        tau = mid
        val = f(tau)
        it += 1
    return tau, val, it, "ok", None


def _brent(f, a, b, fa, fb, tol, budget):
    """Brent-Dekker root finder stopping on ``|f| <= tol``.

    Same return convention as :func:`_bisect`.
    """
    c, fc = b, fb
    d = e = 0.0
    for it in range(1, budget + 1):
        if (fb > 0 and fc > 0) or (fb < 0 and fc < 0):
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        if abs(fb) <= tol:
            return b, fb, it, "ok", None
        tol1 = 2.0 * EPS * abs(b)
        xm = 0.5 * (c - b)
        if abs(xm) <= tol1:
            return b, fb, it, "collapsed", (c, fc)
        if abs(e) >= tol1 and abs(fa) > abs(fb):
            s = fb / fa
            if a == c:
                p = 2.0 * xm * s
                q = 1.0 - s
            else:
                q = fa / fc
                r = fb / fc
                p = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0))
                q = (q - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0:
                q = -q
            p = abs(p)
            if 2.0 * p < min(3.0 * xm * q - abs(tol1 * q), abs(e * q)):
                e = d
                d = p / q
            else:
                d = e = xm
        else:
            d = e = xm
        a, fa = b, fb
        b += d if abs(d) > tol1 else math.copysign(tol1, xm)
        fb = f(b)
    if abs(fb) <= tol:
        return b, fb, budget, "ok", None
    return b, fb, budget, "budget", None


def _blend(p_a, f_a, p_b, f_b):
    """Mix two primal points whose ``phi`` values have opposite signs.

    The optimum is coordinate-wise between ``p(tau_a)`` and ``p(tau_b)``;
    the weight makes the mixture sum to one.
    """
    lam = f_b / (f_b - f_a)
    return lam * p_a + (1.0 - lam) * p_b, lam


def solve_root_separable(spec: EntropySpec, theta, policy: SolverPolicy | None = None,
                         scale=1.0) -> PredictionResult:
    """Prediction for a separable entropy with finite ``h'(0)`` by root finding.

    ``scale`` multiplies the regularizer. The method is bisection or Brent
    (the default); both search ``[tau_min, tau_max]`` until ``|phi| <= tol``.
    For ``alpha > 2`` the map ``tau -> p(tau)`` is not Lipschitz where the
    support changes and no float ``tau`` may reach the tolerance; once the
    bracket collapses the two bracketing primal points are blended so the
    result sums to one.
    """
    _check_root_spec(spec)
    theta = check_scores(theta)
    policy = policy or SolverPolicy()
    method = policy.method or Method.BRENT
    if method not in ROOT_METHODS:
        raise SolverMismatch(f"{method.value} is not a root finding method")
    tol = policy.tolerance
    budget = policy.budget(method)

    def f(tau):
        return float(p_of_tau(spec, theta, tau, scale).sum() - 1.0)

    lo, hi = root_bracket(spec, theta, scale)
    f_lo = f(lo)
    if f_lo <= tol:
        return PredictionResult(p_of_tau(spec, theta, lo, scale), lo, 0, abs(f_lo), method)
    f_hi = f(hi)
    if -f_hi <= tol:
        return PredictionResult(p_of_tau(spec, theta, hi, scale), hi, 0, abs(f_hi), method)

    if method is Method.BISECTION:
        tau, val, it, status, other = _bisect(f, lo, hi, tol, budget)
    else:
        tau, val, it, status, other = _brent(f, lo, hi, f_lo, f_hi, tol, budget)
    p = p_of_tau(spec, theta, tau, scale)
    if status == "collapsed":
        p_other = p_of_tau(spec, theta, other[0], scale)
        p, lam = _blend(p, val, p_other, other[1])
        tau = lam * tau + (1.0 - lam) * other[0]
        val = float(p.sum() - 1.0)
        status = "ok" if abs(val) <= tol else status
    if status != "ok":
        raise NoConvergence(f"{method.value} stopped at |phi| = {abs(val):.3g}",
                            best=p, residual=abs(val), iterations=it)
    return PredictionResult(p, float(tau), it, abs(val), method)


def _phi_slope_rows(spec, p, scale):
    """``-phi'(tau)`` row-wise; ``dp_j / dtau = -p_j^(2 - alpha) / scale`` inside (0, 1)."""
    inner = (p > 0.0) & (p < 1.0)
    safe = np.where(inner, p, 1.0)
    return np.where(inner, safe ** (2.0 - spec.alpha), 0.0).sum(axis=-1) / scale


def solve_root_rows(spec: EntropySpec, theta, policy: SolverPolicy | None = None, scale=1.0):
    """Row-wise root finding over a score matrix, vectorized across rows.

    With ``Method.BISECTION`` every row follows the iteration of
    :func:`solve_root_separable`. Otherwise (the default) each row takes
    Newton steps on ``phi``, kept inside the bracket and replaced by a
    bisection step when they leave it. ``phi`` is convex for ``alpha < 2`` and
    concave for ``alpha > 2``, so Newton starts from the bracket end on the
    side where it cannot overshoot. Rows whose bracket collapses are blended
    as in :func:`solve_root_separable`. Returns ``(P, tau)``.
    """
    _check_root_spec(spec)
    theta = np.atleast_2d(check_scores(theta))
    policy = policy or SolverPolicy()
    newton = policy.method is not Method.BISECTION
    tol = policy.tolerance
    budget = policy.budget(Method.BISECTION)

    def f(tau):
        return p_of_tau(spec, theta, tau, scale).sum(axis=-1) - 1.0

    lo, hi = root_bracket(spec, theta, scale)
    f_lo, f_hi = f(lo), f(hi)
    if newton:
        tau = (lo if spec.alpha <= 2.0 else hi).copy()
    else:
        tau = 0.5 * (lo + hi)
    p = p_of_tau(spec, theta, tau, scale)
    val = p.sum(axis=-1) - 1.0
    done_lo = f_lo <= tol
    done_hi = ~done_lo & (-f_hi <= tol)
    tau = np.where(done_lo, lo, np.where(done_hi, hi, tau))
    val = np.where(done_lo, f_lo, np.where(done_hi, f_hi, val))
    active = np.abs(val) > tol
    collapsed = np.zeros_like(active)
    it = 0
    while active.any():
        if it >= budget:
            raise NoConvergence("row-wise root finding did not converge",
                                best=p_of_tau(spec, theta, tau, scale),
                                residual=float(np.abs(val).max()), iterations=it)
        down = active & (val < 0)
        up = active & (val >= 0)
        hi, f_hi = np.where(down, tau, hi), np.where(down, val, f_hi)
        lo, f_lo = np.where(up, tau, lo), np.where(up, val, f_lo)
        mid = 0.5 * (lo + hi)
        step = mid
        if newton:
            slope = _phi_slope_rows(spec, p, scale)
            with np.errstate(divide="ignore", invalid="ignore"):
                guess = tau + val / slope
            inside = np.isfinite(guess) & (guess > lo) & (guess < hi)
            step = np.where(inside, guess, mid)
        stuck = active & ((step <= lo) | (step >= hi))
        collapsed |= stuck
        active &= ~stuck
        tau = np.where(active, step, tau)
        p = p_of_tau(spec, theta, tau, scale)
        val = np.where(active, p.sum(axis=-1) - 1.0, val)
        active = np.abs(val) > tol
        active &= ~collapsed
        it += 1
    p = p_of_tau(spec, theta, tau, scale)
    if collapsed.any():
        rows = np.flatnonzero(collapsed)
        p_lo = p_of_tau(spec, theta[rows], lo[rows], scale)
        p_hi = p_of_tau(spec, theta[rows], hi[rows], scale)
        mixed, lam = _blend(p_lo, f_lo[rows, None], p_hi, f_hi[rows, None])
        p[rows] = mixed
        tau[rows] = lam[:, 0] * lo[rows] + (1.0 - lam[:, 0]) * hi[rows]
        bad = np.abs(mixed.sum(axis=-1) - 1.0) > tol
        if bad.any():
            raise NoConvergence("row-wise root finding did not converge", best=p,
                                residual=float(np.abs(mixed.sum(axis=-1) - 1.0).max()),
                                iterations=it)
    return p, tau


# --------------------------------------------------------------------------
# projected gradient

def _pg_floor(spec, theta, scale):
    """Lower bound on the coordinates of the maximizer, halved.

    Shannon and Renyi maximizers are interior. At the largest coordinate
    (at least 1/d) the gradient is bounded, which bounds the threshold and,
    through the stationarity condition, every coordinate from below.
    Restricting the iterates to this floor leaves the solution unchanged and
    keeps the gradient, and so the step size, under control.
    """
    if spec.family not in (Family.SHANNON, Family.RENYI):
        return 0.0
    d = theta.shape[-1]
    spread = float(theta.max() - theta.min()) / scale
    if spec.family is Family.SHANNON:
        log_bound = -spread - math.log(d)
    else:
        b = spec.beta
        top = b * d ** (1 - b) / (1 - b)
        log_bound = -math.log((spread + top) * (1 - b) * d ** (1 - b) / b) / (1 - b)
    return max(0.5 * math.exp(max(log_bound, -700.0)), INTERIOR_FLOOR)


def solve_projected_gradient(spec: EntropySpec, theta, policy: SolverPolicy | None = None,
                             scale=1.0, x0=None) -> PredictionResult:
    """Accelerated projected gradient (FISTA) on the simplex.

    Minimizes ``f(p) = -scale * H(p) - <theta, p>``. Each iteration starts its
    backtracking at twice the previous step (capped at 1) and halves it until
    ``<grad f(z) - grad f(y), z - y> <= ||z - y||^2 / (2 eta)``, which for
    convex ``f`` implies the usual quadratic upper bound but, unlike a test on
    objective values, keeps working below rounding level. Momentum restarts
    when the step opposes the momentum direction (the objective would
    increase). Stops once the fixed-point residual
    ``||p - P(p - eta * grad f(p))||`` is at most ``policy.tolerance``.
    """
    theta = check_scores(theta)
    if spec.domain is not Domain.SIMPLEX:
        raise SolverMismatch("projected gradient runs on the simplex only")
    policy = policy or SolverPolicy(Method.PROJECTED_GRADIENT)
    tol = policy.tolerance
    budget = policy.budget(Method.PROJECTED_GRADIENT)
    floor = _pg_floor(spec, theta, scale)
    d = theta.shape[-1]

    def grad(p):
        return -scale * raw_gradient(spec, p) - theta

    if floor == 0.0:
        # near a vertex f can be very flat (like t^q for the q-norm), so check
        # the vertex optimality condition exactly before iterating
        k = int(np.argmax(theta))
        vertex = np.zeros(d)
        vertex[k] = 1.0
        g = grad(vertex)
        if np.all(g >= g[k]):
            return PredictionResult(vertex, None, 0, 0.0, Method.PROJECTED_GRADIENT)

    x = np.full(d, 1.0 / d) if x0 is None else project_simplex(np.asarray(x0, float), floor)
    y, t, eta = x, 1.0, 1.0
    gy = grad(y)
    res = math.inf
    for it in range(1, budget + 1):
        eta = min(1.0, 2.0 * eta)
        for _ in range(200):
            step = y - eta * gy
            if not np.all(np.isfinite(step)):
                eta *= 0.5
                continue
            z = project_simplex(step, floor)
            diff = z - y
            gz = grad(z)
            sq = diff @ diff
            if (gz - gy) @ diff <= sq / (2.0 * eta):
                break
            eta *= 0.5
        if math.sqrt(sq) <= tol:
            res = float(np.linalg.norm(z - project_simplex(z - eta * gz, floor)))
            if res <= tol:
                return PredictionResult(z, None, it, res, Method.PROJECTED_GRADIENT)
        if (y - z) @ (z - x) > 0:
            # momentum points uphill: restart from the accepted point
            y, t, gy = z, 1.0, gz
            x = z
            continue
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = z + ((t - 1.0) / t_next) * (z - x)
        x, t = z, t_next
        if floor > 0.0 and y.min() < floor:
            # the gradient is undefined below the floor: drop the momentum
            y, t = z, 1.0
        gy = grad(y)
    res = float(np.linalg.norm(x - project_simplex(x - eta * grad(x), floor)))
    if res <= tol:
        return PredictionResult(x, None, budget, res, Method.PROJECTED_GRADIENT)
    raise NoConvergence(f"projected gradient stopped at residual {res:.3g}",
                        best=x, residual=res, iterations=budget)


# --------------------------------------------------------------------------
# dispatch

def _closed_form(reg, theta):
    """Closed-form prediction or None."""
    if isinstance(reg, Zero):
        return argmax_vertex(theta)
    if isinstance(reg, SquaredL2):
        return None
    ent, s = reg.entropy, reg.scale
    if ent.domain is Domain.BOX:
        return sigmoid(theta / s)
    if ent.family is Family.SHANNON:
        return softmax(theta / s)
    if ent.family is Family.TSALLIS:
        if abs(ent.alpha - 1.0) < 1e-6:
            return softmax(theta / s)
        if abs(ent.alpha - 2.0) < 1e-12:
            return sparsemax_exact(theta / s)
    if ent.family is Family.SQUARED_NORM and abs(ent.q - 2.0) < 1e-12:
        return sparsemax_exact(theta / s)
    return None


def _is_euclidean(reg):
    if isinstance(reg, SquaredL2):
        return True
    ent = reg.entropy
    return (ent.family is Family.TSALLIS and abs(ent.alpha - 2.0) < 1e-12) or (
        ent.family is Family.SQUARED_NORM and abs(ent.q - 2.0) < 1e-12)


def predict(spec: FyLossSpec, theta, policy: SolverPolicy | None = None,
            label: int | None = None) -> PredictionResult:
    """Regularized prediction ``argmax_p <theta, p> - Omega(p)``.

    ``policy`` overrides ``spec.solver``. The hinge regularizer depends on the
    true class, which must be given as ``label``.
    """
    theta = check_scores(theta)
    if theta.ndim != 1:
        raise ValueError("predict takes a single score vector; use predict_rows")
    policy = policy or spec.solver
    method = policy.method
    reg = spec.regularizer

    if isinstance(reg, HingeLinear):
        if label is None:
            raise OneHotRequired("the hinge regularizer needs the true label")
        if method not in (None, Method.CLOSED_FORM):
            raise SolverMismatch("hinge prediction is closed form only")
        shifted = theta + 1.0
        shifted[label] -= 1.0
        return PredictionResult(argmax_vertex(shifted))

    if isinstance(reg, Zero):
        if method not in (None, Method.CLOSED_FORM):
            raise SolverMismatch("argmax prediction is closed form only")
        return PredictionResult(argmax_vertex(theta))

    if isinstance(reg, SquaredL2):
        if spec.domain is Domain.FULL:
            if method not in (None, Method.CLOSED_FORM):
                raise SolverMismatch("identity prediction is closed form only")
            return PredictionResult(theta / reg.scale)
        if method not in (None, Method.CLOSED_FORM, Method.SORT_PROJECTION):
            raise SolverMismatch("squared regularizer on the simplex uses the sort projection")
        p = sparsemax_exact(theta / reg.scale)
        return PredictionResult(p, method=method or Method.CLOSED_FORM)

    ent, scale = reg.entropy, reg.scale
    if method is None or method is Method.CLOSED_FORM:
        p = _closed_form(reg, theta)
        if p is not None:
            return PredictionResult(p)
        if method is Method.CLOSED_FORM:
            raise SolverMismatch(f"no closed form for {ent}")
        method = Method.BRENT if ent.separable else Method.PROJECTED_GRADIENT
    if ent.domain is Domain.BOX:
        raise SolverMismatch("box-domain prediction is closed form only")
    if method is Method.SORT_PROJECTION:
        if not _is_euclidean(reg):
            raise SolverMismatch(f"sort projection does not apply to {ent}")
        return PredictionResult(sparsemax_exact(theta / scale), method=method)
    if method in ROOT_METHODS:
        return solve_root_separable(ent, theta, SolverPolicy(
            method, policy.tolerance, policy.max_iterations), scale)
    return solve_projected_gradient(ent, theta, SolverPolicy(
        method, policy.tolerance, policy.max_iterations), scale)


def predict_rows(spec: FyLossSpec, theta, policy: SolverPolicy | None = None):
    """Row-wise prediction for a score matrix.

    Closed forms and Tsallis root finding are vectorized across rows (see
    :func:`solve_root_rows`); other cases loop over rows. Each row's
    result depends only on that row.
    """
    return predict_rows_tau(spec, theta, policy)[0]


def predict_rows_tau(spec: FyLossSpec, theta, policy: SolverPolicy | None = None):
    """Like :func:`predict_rows`, also returning the row thresholds.

    The thresholds are None unless the rows were solved by root finding.
    """
    theta = np.atleast_2d(check_scores(theta))
    policy = policy or spec.solver
    reg = spec.regularizer
    if isinstance(reg, HingeLinear):
        raise OneHotRequired("the hinge regularizer needs labels; use losses.loss_rows")
    if policy.method in (None, Method.CLOSED_FORM):
        if isinstance(reg, SquaredL2):
            if spec.domain is Domain.FULL:
                return theta / reg.scale, None
            return sparsemax_exact(theta / reg.scale), None
        p = _closed_form(reg, theta)
        if p is not None:
            return p, None
    if (isinstance(reg, NegEntropy) and reg.entropy.family is Family.TSALLIS
            and policy.method in (None, Method.BISECTION, Method.BRENT)):
        return solve_root_rows(reg.entropy, theta, policy, reg.scale)
    results = [predict(spec, row, policy) for row in theta]
    p = np.stack([r.p for r in results])
    if all(r.tau is not None for r in results):
        return p, np.array([r.tau for r in results])
    return p, None
