"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also repeated in the pytest terminal summary. Runtime limits
are part of the criteria and are asserted with wall-clock timers.
"""

import math
import time

import numpy as np
import pytest

from fyloss import (
    Method,
    SolverPolicy,
    bregman_bound_check,
    conjugate_value,
    data_io,
    loss_value,
    margin_brute_force,
    margin_closed_form,
    margin_empirical,
    norm,
    predict,
    shannon,
    softmax,
    solve_root_separable,
    sparsemax_exact,
    tsallis,
)
from fyloss.bench import bench_solvers, summarize
from fyloss.cli import _raw_from_dense
from fyloss.entropies import Domain
from fyloss.learn import (
    LinearModel,
    average_support,
    evaluate,
    fit,
    objective_and_gradient,
    synthetic_proportions,
)
from fyloss.losses import loss_rows, temperature_scaled_loss
from fyloss.prediction import solve_root_rows
from fyloss.specs import (
    FyLossSpec,
    NegEntropy,
    logistic_loss,
    one_vs_all_logistic_loss,
    perceptron_loss,
    sparsemax_loss,
    squared_loss,
    tsallis_loss,
)

from support import (
    ALL_ENTROPIES,
    central_difference,
    central_difference_rows,
    criterion,
    random_simplex,
    relative_error,
)

TIGHT = SolverPolicy(tolerance=1e-12)

GRADIENT_SUITE = {
    "logistic": logistic_loss(),
    "sparsemax": sparsemax_loss(),
    "tsallis1.25": tsallis_loss(1.25),
    "tsallis1.5": tsallis_loss(1.5),
    "tsallis1.75": tsallis_loss(1.75),
    "squared": squared_loss(),
    "ova_logistic": one_vs_all_logistic_loss(),
}


def random_scores(rng, d):
    return rng.normal(size=d) * math.exp(rng.uniform(-2, 2))


def random_target(rng, spec, d):
    if spec.domain is Domain.BOX:
        return rng.random(d)
    if spec.domain is Domain.FULL:
        return rng.normal(size=d)
    return random_simplex(rng, d, sparse=rng.random() < 0.5)


def entropy_spec(ent, scale=1.0):
    return FyLossSpec(NegEntropy(ent, scale), ent.domain)


# --------------------------------------------------------------------------

def test_criterion_1_sparsemax_equivalence():
    with criterion(1, "root finding at alpha=2 matches sort-based sparsemax") as c:
        start = time.perf_counter()
        rng = np.random.default_rng(1)
        dims = rng.integers(2, 51, size=10_000)
        scales = np.exp(rng.uniform(-3, 3, size=10_000))
        worst_rows = worst_brent = 0.0
        for d in range(2, 51):
            idx = np.flatnonzero(dims == d)
            theta = rng.normal(size=(idx.size, d)) * scales[idx, None]
            exact = sparsemax_exact(theta)
            for method in (Method.BRENT, Method.BISECTION):
                P, _ = solve_root_rows(tsallis(2.0), theta, SolverPolicy(method))
                worst_rows = max(worst_rows, float(np.abs(P - exact).max()))
            for row, ref in zip(theta[::5], exact[::5]):
                p = solve_root_separable(tsallis(2.0), row).p
                worst_brent = max(worst_brent, float(np.abs(p - ref).max()))
        elapsed = time.perf_counter() - start
        c.detail = (f"max Linf batched {worst_rows:.2e}, scalar Brent {worst_brent:.2e}, "
                    f"{elapsed:.1f}s")
        assert worst_rows <= 1e-8 and worst_brent <= 1e-8
        assert elapsed < 5.0


def test_criterion_2_gradient_suite():
    with criterion(2, "analytic loss gradients match central differences") as c:
        start = time.perf_counter()
        rng = np.random.default_rng(2)
        worst = {}
        for name, spec in GRADIENT_SUITE.items():
            err = 0.0
            for _ in range(1000):
                d = int(rng.integers(2, 7))
                theta = rng.normal(size=d) * 2
                y = random_target(rng, spec, d)
                g = loss_value(spec, theta, y).gradient
                fd = central_difference_rows(
                    lambda T: loss_rows(spec, T, np.tile(y, (len(T), 1)))[0], theta, 1e-6)
                err = max(err, relative_error(g, fd))
            worst[name] = err
        elapsed = time.perf_counter() - start
        c.detail = f"worst {max(worst.values()):.1e} over 7x1000 cases, {elapsed:.1f}s"
        assert all(v <= 1e-5 for v in worst.values()), worst
        assert elapsed < 30.0


def test_criterion_3_margins():
    with criterion(3, "closed-form margins match brute force and empirical margins") as c:
        start = time.perf_counter()
        entropies = [tsallis(a) for a in np.round(np.arange(1.1, 3.01, 0.1), 1)]
        entropies += [norm(1.5), norm(2.0), norm(4.0)]
        worst_brute = worst_emp = 0.0
        for ent in entropies:
            closed = margin_closed_form(ent)
            expected = 1.0 / (ent.alpha - 1) if ent.family.value == "tsallis" else 1.0
            assert closed == pytest.approx(expected, rel=1e-12)
            for d in (2, 3, 5):
                brute = margin_brute_force(ent, d, 100_000)
                empirical = margin_empirical(ent, d, trials=20, seed=d)
                worst_brute = max(worst_brute, abs(brute - closed))
                worst_emp = max(worst_emp, abs(empirical - closed))
        elapsed = time.perf_counter() - start
        c.detail = (f"brute force off by {worst_brute:.1e}, empirical by {worst_emp:.1e}, "
                    f"{elapsed:.1f}s")
        assert worst_brute <= 1e-3 and worst_emp <= 1e-2
        assert elapsed < 60.0


def test_criterion_4_limits():
    with criterion(4, "alpha -> 1 gives softmax, alpha -> infinity the perceptron loss") as c:
        rng = np.random.default_rng(4)
        near_one = tsallis_loss(1 + 1e-4)
        near_inf = tsallis_loss(1e4)
        worst_soft = worst_perc = 0.0
        for _ in range(1000):
            d = int(rng.integers(2, 51))
            theta = random_scores(rng, d)
            worst_soft = max(worst_soft, float(np.abs(predict(near_one, theta).p
                                                      - softmax(theta)).max()))
            k = int(rng.integers(d))
            y = np.eye(d)[k]
            perceptron = loss_value(perceptron_loss(), theta, y).value
            worst_perc = max(worst_perc, abs(loss_value(near_inf, theta, y).value - perceptron))
        c.detail = f"softmax gap {worst_soft:.1e}, perceptron gap {worst_perc:.1e}"
        assert worst_soft <= 1e-3 and worst_perc <= 1e-3


def test_criterion_5_bregman_bound():
    with criterion(5, "0 <= B(y || yhat) <= L, with equality for Shannon") as c:
        rng = np.random.default_rng(5)
        lowest, excess = math.inf, -math.inf
        for alpha in (1.5, 2.0):
            for _ in range(10_000):
                d = int(rng.integers(2, 10))
                theta = random_scores(rng, d)
                y = random_simplex(rng, d, sparse=rng.random() < 0.5)
                lower, upper = bregman_bound_check(tsallis(alpha), theta, y, TIGHT)
                lowest = min(lowest, lower)
                excess = max(excess, lower - upper)
        gap = 0.0
        for _ in range(10_000):
            d = int(rng.integers(2, 10))
            theta = rng.normal(size=d) * 2
            y = random_simplex(rng, d)
            lower, upper = bregman_bound_check(shannon(), theta, y)
            gap = max(gap, abs(lower - upper))
        c.detail = f"min B {lowest:.1e}, max B - L {excess:.1e}, Shannon gap {gap:.1e}"
        assert lowest >= 0.0 and excess <= 1e-9 and gap <= 1e-8


def _permutation_equivariance(rng):
    worst = 0.0
    for i in range(1000):
        ent = ALL_ENTROPIES[i % len(ALL_ENTROPIES)]
        theta = random_scores(rng, int(rng.integers(2, 9)))
        perm = rng.permutation(theta.size)
        spec = entropy_spec(ent)
        a = predict(spec, theta[perm], TIGHT).p
        b = predict(spec, theta, TIGHT).p[perm]
        worst = max(worst, float(np.abs(a - b).max()))
    assert worst <= 1e-9, worst
    return worst


def _order_preservation(rng):
    for i in range(1000):
        ent = ALL_ENTROPIES[i % len(ALL_ENTROPIES)]
        theta = random_scores(rng, int(rng.integers(2, 9)))
        p = predict(entropy_spec(ent), theta, TIGHT).p
        greater = theta[:, None] > theta[None, :]
        assert np.all(p[:, None] >= p[None, :] - 1e-12, where=greater)
        assert np.all(greater, where=p[:, None] > p[None, :] + 1e-9)


def _temperature_scaling(rng, t):
    worst = 0.0
    for i in range(1000):
        ent = ALL_ENTROPIES[i % len(ALL_ENTROPIES)]
        theta = random_scores(rng, int(rng.integers(2, 9)))
        a = predict(entropy_spec(ent, t), theta, TIGHT).p
        b = predict(entropy_spec(ent), theta / t, TIGHT).p
        worst = max(worst, float(np.abs(a - b).max()))
    assert worst <= 1e-9, (t, worst)
    return worst


def _non_negativity(rng):
    lowest = math.inf
    for spec in (logistic_loss(), sparsemax_loss(), tsallis_loss(1.5), tsallis_loss(3.0)):
        theta = rng.normal(size=(2500, 6)) * np.exp(rng.uniform(-2, 2, size=(2500, 1)))
        Y = rng.dirichlet(np.full(6, 0.5), size=2500)
        Y[Y < 0.05] = 0.0
        Y /= Y.sum(axis=1, keepdims=True)
        lowest = min(lowest, float(loss_rows(spec, theta, Y)[0].min()))
    for i in range(1000):
        ent = ALL_ENTROPIES[i % len(ALL_ENTROPIES)]
        d = int(rng.integers(2, 8))
        lowest = min(lowest, loss_value(entropy_spec(ent), random_scores(rng, d),
                                        random_simplex(rng, d, sparse=True)).value)
    assert lowest >= -1e-12, lowest
    return lowest


def _convexity(rng):
    specs = list(GRADIENT_SUITE.values()) + [entropy_spec(norm(2.0))]
    worst = -math.inf
    for i in range(1000):
        spec = specs[i % len(specs)]
        d = int(rng.integers(2, 7))
        t1, t2 = random_scores(rng, d), random_scores(rng, d)
        y = random_target(rng, spec, d)
        lam = rng.uniform(0.01, 0.99)
        mid = loss_value(spec, lam * t1 + (1 - lam) * t2, y).value
        chord = lam * loss_value(spec, t1, y).value + (1 - lam) * loss_value(spec, t2, y).value
        worst = max(worst, mid - chord)
    assert worst <= 1e-9, worst
    return worst


def _cumulant_shift(rng):
    specs = [logistic_loss(), sparsemax_loss(), tsallis_loss(1.5), tsallis_loss(3.0),
             entropy_spec(norm(2.0))]
    worst = 0.0
    for i in range(1000):
        spec = specs[i % len(specs)]
        d = int(rng.integers(2, 7))
        theta = random_scores(rng, d)
        k = int(rng.integers(d))
        # Omega*(theta) - theta_k against Omega*(theta - theta_k 1)
        direct = conjugate_value(spec, theta) - theta[k]
        shifted = conjugate_value(spec, theta - theta[k])
        via_loss = loss_value(spec, theta, np.eye(d)[k]).value
        worst = max(worst, abs(direct - shifted), abs(via_loss - shifted))
    assert worst <= 1e-9, worst
    return worst


def test_criterion_6_property_suites():
    with criterion(6, "property suites over 1000 randomized cases each") as c:
        rng = np.random.default_rng(6)
        start = time.perf_counter()
        results = {
            "nonneg": _non_negativity(rng),
            "convexity": _convexity(rng),
            "permutation": _permutation_equivariance(rng),
            "cumulant": _cumulant_shift(rng),
        }
        _order_preservation(rng)
        for t in (0.5, 2.0, 10.0):
            results[f"temperature{t:g}"] = _temperature_scaling(rng, t)
        # the loss-level form of temperature scaling
        for _ in range(1000):
            theta = random_scores(rng, 4)
            y = random_simplex(rng, 4)
            direct = loss_value(FyLossSpec(NegEntropy(tsallis(2.0), 0.5)), theta, y).value
            assert temperature_scaled_loss(sparsemax_loss(), 0.5, theta, y) == pytest.approx(
                direct, abs=1e-9)
        c.detail = ", ".join(f"{k} {v:.1e}" for k, v in results.items())
        c.detail += f", {time.perf_counter() - start:.0f}s"


def test_criterion_7_solver_benchmark():
    with criterion(7, "median time Brent <= bisection <= projected gradient at d=1e4") as c:
        start = time.perf_counter()
        records = bench_solvers(dims=(10_000,), trials=10, seed=7, alpha=1.5)
        elapsed = time.perf_counter() - start
        rows = {r["solver"]: r for r in summarize(records)}
        brent, bisect, pg = (rows[m]["median_ns"] for m in ("brent", "bisect", "pg"))
        c.detail = (f"medians brent {brent / 1e6:.1f}ms, bisect {bisect / 1e6:.1f}ms, "
                    f"pg {pg / 1e6:.1f}ms, ratio {pg / brent:.0f}x, {elapsed:.0f}s")
        assert all(rows[m]["success_rate"] == 1.0 for m in rows)
        assert brent <= bisect <= pg
        assert pg >= 5 * brent
        assert elapsed < 180.0


ALPHAS = np.round(np.arange(1.0, 2.01, 0.1), 1)
LAMBDAS = 10.0 ** np.arange(4, -5, -1)


@pytest.fixture(scope="session")
def label_proportion_runs():
    """Fit every (alpha, lambda) on a seeded synthetic set; warm starts along lambda."""
    start = time.perf_counter()
    X, Y = synthetic_proportions(8, 1400, 50, 10)
    raw = _raw_from_dense(X, Y)
    train = data_io.preprocess(raw.subset(np.arange(1200)))
    val = data_io.preprocess(raw.subset(np.arange(1200, 1400)), train.feature_stats,
                             "validation")
    runs = []
    for alpha in ALPHAS:
        spec = tsallis_loss(float(alpha))
        W = None
        for lam in LAMBDAS:
            model = fit(spec, lam, train.X, train.Y, W0=W)
            W = model.weights
            runs.append({"alpha": float(alpha), "lambda": lam, "model": model,
                         "js": evaluate(model, val.X, val.Y).mean_js,
                         "support": average_support(model.predict(val.X))})
    return runs, val, time.perf_counter() - start


def test_criterion_8_label_proportions(label_proportion_runs):
    with criterion(8, "tuned alpha beats logistic on validation JS; alpha=2 is sparser") as c:
        runs, val, elapsed = label_proportion_runs
        best = min(runs, key=lambda r: r["js"])
        logistic = min((r for r in runs if r["alpha"] == 1.0), key=lambda r: r["js"])
        sparse = min((r for r in runs if r["alpha"] == 2.0), key=lambda r: r["js"])
        c.detail = (f"tuned alpha {best['alpha']:g} JS {best['js']:.4f} vs logistic "
                    f"{logistic['js']:.4f}; support {sparse['support']:.2f} vs "
                    f"{logistic['support']:.2f}; {elapsed:.0f}s")
        assert best["js"] <= logistic["js"] + 1e-6
        assert sparse["support"] < logistic["support"]
        assert elapsed < 240.0


def test_criterion_9_trainer(label_proportion_runs):
    with criterion(9, "objective gradient matches finite differences; monotone train logs") as c:
        rng = np.random.default_rng(9)
        worst = 0.0
        for spec in GRADIENT_SUITE.values():
            for lam in (0.0, 0.5):
                X = rng.normal(size=(5, 3))
                Y = np.stack([random_target(rng, spec, 3) for _ in range(5)])
                W = rng.normal(size=(3, 3))
                _, grad = objective_and_gradient(LinearModel(W, spec, lam), X, Y)

                def objective(w):
                    return objective_and_gradient(LinearModel(w, spec, lam), X, Y)[0]

                worst = max(worst, relative_error(grad, central_difference(objective, W)))
        runs, _, _ = label_proportion_runs
        increases = 0
        for run in runs:
            increases += int(np.sum(np.diff(run["model"].train_log.objectives) > 0))
        unconverged = sum(not r["model"].converged for r in runs)
        c.detail = (f"gradient error {worst:.1e}; {increases} objective increases over "
                    f"{len(runs)} runs ({unconverged} hit the iteration cap)")
        assert worst <= 1e-5
        assert increases == 0
