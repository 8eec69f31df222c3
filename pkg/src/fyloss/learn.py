"""Linear models trained with Fenchel-Young losses.

The objective is ``R(W) = sum_i L(W x_i; y_i) + lam/2 ||W||_F^2`` with
gradient ``(Yhat - Y)^T X + lam W``. ``X`` can be a dense array, a scipy
sparse matrix or a :class:`fyloss.data_io.StandardizedMatrix`; only
``X @ A`` and ``X.T @ B`` are used.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .data_io import FeatureStats
from .entropies import Domain, check_probability
from .errors import DomainViolation, NonFiniteObjective
from .losses import loss_rows
from .prediction import predict_rows, project_simplex
from .specs import FyLossSpec, HingeLinear, SolverPolicy

FORMAT_VERSION = 1


@dataclass
class TrainLog:
    """``(iteration, objective, max |gradient|)`` per accepted step."""

    entries: list = field(default_factory=list)
    status: str = "running"

    def record(self, iteration, objective, grad_norm):
        self.entries.append((int(iteration), float(objective), float(grad_norm)))

    @property
    def objectives(self):
        return np.array([e[1] for e in self.entries])

    def to_dict(self):
        return {"status": self.status, "entries": [list(e) for e in self.entries]}

    @classmethod
    def from_dict(cls, data):
        return cls([tuple(e) for e in data["entries"]], data["status"])


@dataclass
class LinearModel:
    weights: np.ndarray
    loss_spec: FyLossSpec
    lam: float = 0.0
    train_log: TrainLog = field(default_factory=TrainLog)
    stats: FeatureStats | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.ndim != 2:
            raise ValueError("weights must be a d x p matrix")
        if not np.all(np.isfinite(self.weights)):
            raise NonFiniteObjective("weights are not finite")
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")

    @property
    def converged(self):
        return self.train_log.status == "converged"

    def scores(self, X):
        return np.asarray(X @ self.weights.T)

    def predict(self, X, policy: SolverPolicy | None = None):
        return predict_rows(self.loss_spec, self.scores(X), policy)

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "weights": self.weights.tolist(),
            "loss_spec": self.loss_spec.to_dict(),
            "lambda": self.lam,
            "stats": None if self.stats is None else self.stats.to_dict(),
            "train_log": self.train_log.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported format_version {data.get('format_version')!r}")
        stats = data.get("stats")
        return cls(
            np.asarray(data["weights"], dtype=float),
            FyLossSpec.from_dict(data["loss_spec"]),
            float(data["lambda"]),
            TrainLog.from_dict(data["train_log"]),
            None if stats is None else FeatureStats.from_dict(stats),
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _check_data(spec, X, Y, d):
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    check_probability(Y, spec.domain)
    if X.shape[0] != Y.shape[0]:
        raise DomainViolation(f"{X.shape[0]} feature rows but {Y.shape[0]} target rows")
    if Y.shape[1] != d:
        raise DomainViolation(f"targets have {Y.shape[1]} columns, model has {d} outputs")
    return Y


def _objective(spec, lam, W, X, Y, policy=None):
    theta = np.asarray(X @ W.T)
    values, P = loss_rows(spec, theta, Y, policy)
    obj = float(values.sum()) + 0.5 * lam * float(np.sum(W * W))
    grad = np.asarray(X.T @ (P - Y)).T + lam * W
    return obj, grad


def objective_and_gradient(model: LinearModel, X, Y, policy: SolverPolicy | None = None):
    """``(R(W), grad R(W))`` for the model's weights on ``(X, Y)``."""
    W = model.weights
    if X.shape[1] != W.shape[1]:
        raise DomainViolation(f"{X.shape[1]} features but weights expect {W.shape[1]}")
    Y = _check_data(model.loss_spec, X, Y, W.shape[0])
    return _objective(model.loss_spec, model.lam, W, X, Y, policy)


# --------------------------------------------------------------------------
# optimization

@dataclass(frozen=True)
class OptimizerConfig:
    """``method`` is ``"lbfgs"``, ``"gd"``, ``"subgradient"`` or None (auto).

    Auto picks L-BFGS for smooth losses and the ``step0 / sqrt(t)``
    subgradient schedule for the perceptron and hinge losses.
    """

    method: str | None = None
    max_iterations: int = 1000
    gradient_tolerance: float = 1e-5
    memory: int = 10
    c1: float = 1e-4
    max_backtracks: int = 60
    step0: float = 1.0

    def __post_init__(self):
        if self.method not in (None, "lbfgs", "gd", "subgradient"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.memory < 1:
            raise ValueError("memory must be >= 1")


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        q -= a * y
        alphas.append(a)
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def _line_search(f, w, obj, g, direction, step, cfg):
    """Armijo backtracking by halving; returns ``(step, w, obj, grad)`` or None."""
    slope = g @ direction
    finite_seen = False
    for _ in range(cfg.max_backtracks):
        w_new = w + step * direction
        obj_new, g_new = f(w_new)
        if math.isfinite(obj_new):
            finite_seen = True
            if obj_new <= obj + cfg.c1 * step * slope:
                return step, w_new, obj_new, g_new
        step *= 0.5
    if not finite_seen:
        raise NonFiniteObjective("objective is not finite along the search direction")
    return None


def _fit_smooth(f, w, cfg, log, use_lbfgs):
    obj, g = f(w)
    if not math.isfinite(obj):
        raise NonFiniteObjective("objective is not finite at the starting point")
    gnorm = float(np.abs(g).max())
    log.record(0, obj, gnorm)
    pairs = deque(maxlen=cfg.memory)
    step = 1.0 / max(1.0, float(np.linalg.norm(g)))
    for it in range(1, cfg.max_iterations + 1):
        if gnorm <= cfg.gradient_tolerance:
            log.status = "converged"
            return w
        if use_lbfgs and pairs:
            direction = _two_loop(g, list(pairs))
            trial = 1.0
            if g @ direction >= 0:
                pairs.clear()
                direction, trial = -g, step
        else:
            direction, trial = -g, step if use_lbfgs else 2.0 * step
        found = _line_search(f, w, obj, g, direction, trial, cfg)
        if found is None and pairs:
            # fall back to steepest descent once before giving up
            pairs.clear()
            found = _line_search(f, w, obj, g, -g, step, cfg)
        if found is None:
            log.status = "stalled"
            return w
        step, w_new, obj_new, g_new = found
        s, yv = w_new - w, g_new - g
        sy = s @ yv
        if use_lbfgs and sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            pairs.append((s, yv, 1.0 / sy))
        w, obj, g = w_new, obj_new, g_new
        gnorm = float(np.abs(g).max())
        log.record(it, obj, gnorm)
    log.status = "converged" if gnorm <= cfg.gradient_tolerance else "max_iterations"
    return w


def _fit_subgradient(f, w, cfg, log):
    obj, g = f(w)
    if not math.isfinite(obj):
        raise NonFiniteObjective("objective is not finite at the starting point")
    best_w, best = w, obj
    log.record(0, obj, float(np.abs(g).max()))
    for it in range(1, cfg.max_iterations + 1):
        gn = float(np.linalg.norm(g))
        if gn == 0.0:
            log.status = "converged"
            return w
        w = w - (cfg.step0 / math.sqrt(it)) * g / max(1.0, gn)
        obj, g = f(w)
        if not math.isfinite(obj):
            raise NonFiniteObjective("subgradient iterate has a non-finite objective")
        if obj < best:
            best_w, best = w, obj
            # the log keeps the best iterate so far, which is what fit returns
            log.record(it, obj, float(np.abs(g).max()))
    log.status = "max_iterations"
    return best_w


def fit(spec: FyLossSpec, lam, X, Y, opt: OptimizerConfig | None = None,
        policy: SolverPolicy | None = None, W0=None, stats=None) -> LinearModel:
    """Minimize ``R(W)`` from ``W0`` (zeros by default).

    Deterministic: the same inputs give bitwise-identical weights.
    """
    opt = opt or OptimizerConfig()
    if X.shape[0] < 1:
        raise ValueError("need at least one sample")
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    d, p = Y.shape[1], X.shape[1]
    Y = _check_data(spec, X, Y, d)
    shape = (d, p)

    def f(w):
        with np.errstate(over="ignore", invalid="ignore"):
            obj, grad = _objective(spec, lam, w.reshape(shape), X, Y, policy)
        return obj, grad.ravel()

    w0 = np.zeros(d * p) if W0 is None else np.asarray(W0, dtype=float).ravel().copy()
    method = opt.method
    if method is None:
        method = "lbfgs" if spec.strictly_convex and not isinstance(
            spec.regularizer, HingeLinear) else "subgradient"
    log = TrainLog()
    if method == "subgradient":
        w = _fit_subgradient(f, w0, opt, log)
    else:
        w = _fit_smooth(f, w0, opt, log, use_lbfgs=(method == "lbfgs"))
    return LinearModel(w.reshape(shape), spec, float(lam), log, stats)


# --------------------------------------------------------------------------
# evaluation

@dataclass(frozen=True)
class MetricReport:
    mean_js: float
    mean_mse: float
    n: int

    def to_dict(self):
        return {"mean_js": self.mean_js, "mean_mse": self.mean_mse, "n": self.n}


def _kl_rows(a, b):
    # 0 log 0 = 0; b > 0 wherever a > 0 for the mixtures used here
    ratio = np.divide(a, b, out=np.ones_like(a), where=a > 0)
    return np.sum(np.where(a > 0, a * np.log(ratio), 0.0), axis=-1)


def js_divergence(p, y):
    """Row-wise Jensen-Shannon divergence, natural log, in ``[0, ln 2]``."""
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    m = 0.5 * (p + y)
    return 0.5 * _kl_rows(p, m) + 0.5 * _kl_rows(y, m)


def half_squared_error(p, y):
    diff = np.asarray(p, dtype=float) - np.asarray(y, dtype=float)
    return 0.5 * np.sum(diff * diff, axis=-1)


def as_proportions(spec: FyLossSpec, P):
    """Map predictions onto the simplex for scoring.

    Simplex predictions are returned unchanged (up to clipping of rounding
    noise); full-space predictions are projected and box predictions are
    L1-normalized.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if spec.domain is Domain.FULL:
        return project_simplex(P)
    P = np.clip(P, 0.0, None)
    return P / P.sum(axis=-1, keepdims=True)


def evaluate(model: LinearModel, X, Y, policy: SolverPolicy | None = None) -> MetricReport:
    Y = _check_data(model.loss_spec, X, Y, model.weights.shape[0])
    P = as_proportions(model.loss_spec, model.predict(X, policy))
    return MetricReport(float(np.mean(js_divergence(P, Y))),
                        float(np.mean(half_squared_error(P, Y))), int(Y.shape[0]))


def average_support(P, threshold=0.0):
    return float(np.mean(np.sum(np.asarray(P) > threshold, axis=-1)))


# --------------------------------------------------------------------------
# synthetic data

def synthetic_proportions(seed, n, p, d, doc_length_poisson_mean=50.0,
                          labels_poisson_mean=1.0, word_concentration=0.1,
                          label_concentration=1.0):
    """Documents from a mixture of multinomials with sparse label proportions.

    Per sample: ``k ~ max(1, Poisson(labels_poisson_mean))`` labels are drawn
    from a ground-truth multinomial and ``y`` holds their frequencies; then
    ``max(1, Poisson(doc_length_poisson_mean))`` words are drawn from the
    per-label word distributions mixed by ``y``. Rows of ``X`` are word
    counts. The two concentrations set how peaked the Dirichlet draws of the
    label and word distributions are.
    """
    if min(n, p, d) < 1 or doc_length_poisson_mean <= 0 or labels_poisson_mean <= 0:
        raise ValueError("parameters must be positive")
    rng = np.random.default_rng(seed)
    label_dist = rng.dirichlet(np.full(d, label_concentration))
    word_dist = rng.dirichlet(np.full(p, word_concentration), size=d)
    X = np.zeros((n, p))
    Y = np.zeros((n, d))
    for i in range(n):
        k = max(1, int(rng.poisson(labels_poisson_mean)))
        Y[i] = rng.multinomial(k, label_dist) / k
        length = max(1, int(rng.poisson(doc_length_poisson_mean)))
        mix = Y[i] @ word_dist
        X[i] = rng.multinomial(length, mix / mix.sum())
    return X, Y
