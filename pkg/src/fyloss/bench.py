"""Solver timing and curve sweeps that feed the CLI's CSV output."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .entropies import EntropySpec, Family, _entropy, norm, shannon, tsallis
from .errors import NoConvergence
from .losses import loss_value
from .prediction import (
    solve_projected_gradient,
    solve_root_separable,
    sparsemax_exact,
)
from .specs import FyLossSpec, Method, NegEntropy, SolverPolicy

TARGET_ERROR = 1e-5
SOLVERS = (Method.BISECTION, Method.BRENT, Method.PROJECTED_GRADIENT)
DEFAULT_DIMS = (10, 100, 1000, 10_000)


@dataclass
class BenchRecord:
    solver: str
    dimension: int
    time_to_tolerance_ns: int
    achieved_error: float
    trial_sigma: float
    trial: int = 0
    tolerance: float = math.nan
    success: bool = True

    def to_dict(self):
        return asdict(self)


def draw_scores(rng, d):
    """``theta ~ N(0, sigma I)`` with ``log sigma ~ U(-4, 4)``."""
    sigma = math.exp(rng.uniform(-4.0, 4.0))
    return sigma * rng.standard_normal(d), sigma


def reference_solution(spec: EntropySpec, theta):
    if spec.family is Family.TSALLIS and spec.alpha == 2.0:
        return sparsemax_exact(theta)
    return solve_root_separable(spec, theta, SolverPolicy(Method.BRENT, 1e-12)).p


def _run(spec, theta, method, tol):
    policy = SolverPolicy(method, tol)
    if method is Method.PROJECTED_GRADIENT:
        return solve_projected_gradient(spec, theta, policy).p
    return solve_root_separable(spec, theta, policy).p


def _median_time(fn, warmup, repeats):
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        start = time.perf_counter_ns()
        fn()
        times.append(time.perf_counter_ns() - start)
    return int(np.median(times))


def time_to_accuracy(spec, theta, p_star, method, warmup=5, repeats=5,
                     target=TARGET_ERROR, tolerances=None):
    """Loosest solver tolerance whose output is within ``target`` of ``p_star``.

    Tolerances are tried from ``target`` downwards by factors of 10; the
    median time of the first one that reaches the target is reported.
    """
    tolerances = tolerances or [target * 10.0 ** -k for k in range(10)]
    err = math.nan
    for tol in tolerances:
        try:
            p = _run(spec, theta, method, tol)
        except NoConvergence:
            continue
        err = float(np.linalg.norm(p - p_star))
        if err < target:
            ns = _median_time(lambda: _run(spec, theta, method, tol), warmup, repeats)
            return ns, err, tol
    return None, err, math.nan


def bench_solvers(dims=DEFAULT_DIMS, trials=10, seed=0, alpha=1.5, warmup=5, repeats=5,
                  solvers=SOLVERS, time_budget=None):
    """Time each solver to ``||p - p*||_2 < 1e-5`` on random scores.

    Failures become rows with ``success=False``. With ``time_budget``
    (seconds) the run stops early and returns the rows finished so far.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    spec = tsallis(alpha)
    rng = np.random.default_rng(seed)
    start = time.monotonic()
    records = []
    for d in dims:
        for trial in range(trials):
            theta, sigma = draw_scores(rng, d)
            p_star = reference_solution(spec, theta)
            for method in solvers:
                if time_budget is not None and time.monotonic() - start > time_budget:
                    return records
                ns, err, tol = time_to_accuracy(spec, theta, p_star, Method(method),
                                                warmup, repeats)
                records.append(BenchRecord(
                    Method(method).value, int(d), -1 if ns is None else ns, err, sigma,
                    trial, tol, ns is not None))
    return records


def summarize(records, level=0.99, resamples=1000, seed=0):
    """Per (solver, dimension): success rate, median time and a bootstrap
    interval for the median at the given level."""
    rng = np.random.default_rng(seed)
    groups = {}
    for r in records:
        groups.setdefault((r.solver, r.dimension), []).append(r)
    out = []
    for (solver, d), rows in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        times = np.array([r.time_to_tolerance_ns for r in rows if r.success], dtype=float)
        row = {"solver": solver, "dimension": d, "trials": len(rows),
               "success_rate": len(times) / len(rows)}
        if len(times):
            boot = np.median(rng.choice(times, size=(resamples, len(times))), axis=1)
            tail = 50.0 * (1.0 - level)
            row.update(median_ns=float(np.median(times)),
                       low_ns=float(np.percentile(boot, tail)),
                       high_ns=float(np.percentile(boot, 100.0 - tail)))
        else:
            row.update(median_ns=math.nan, low_ns=math.nan, high_ns=math.nan)
        out.append(row)
    return out


# --------------------------------------------------------------------------
# binary curves

def _family_spec(family, param):
    family = Family(family)
    if family is Family.TSALLIS:
        return tsallis(param) if param != 1 else shannon()
    if family is Family.NORM:
        return norm(param)
    if family is Family.SHANNON:
        return shannon()
    return EntropySpec(family, **{
        Family.SQUARED_NORM: {"q": param}, Family.RENYI: {"beta": param}}[family])


def sweep_curves(family, params, t_grid):
    """Rows ``(parameter, t, H(yhat), yhat_1, L((t, 0); e_1))`` for ``d = 2``."""
    rows = []
    target = np.array([1.0, 0.0])
    for param in params:
        spec = _family_spec(family, param)
        loss_spec = FyLossSpec(NegEntropy(spec))
        for t in t_grid:
            ev = loss_value(loss_spec, np.array([float(t), 0.0]), target)
            p = np.clip(ev.prediction, 0.0, 1.0)
            rows.append({"parameter": float(param), "t": float(t),
                         "entropy": float(_entropy(spec, p)),
                         "y1": float(ev.prediction[0]), "loss": ev.value})
    return rows


def to_csv(rows, fieldnames=None):
    buf = io.StringIO()
    if not rows:
        return ""
    writer = csv.DictWriter(buf, fieldnames=fieldnames or list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def read_csv(text):
    """Parse :func:`to_csv` output back into dicts of floats where possible."""
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        parsed = {}
        for k, v in row.items():
            try:
                parsed[k] = float(v)
            except ValueError:
                parsed[k] = {"True": True, "False": False}.get(v, v)
        rows.append(parsed)
    return rows
