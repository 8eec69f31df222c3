import math

import numpy as np
import pytest

from fyloss import bench, tsallis
from fyloss.bench import (
    BenchRecord,
    bench_solvers,
    draw_scores,
    read_csv,
    reference_solution,
    summarize,
    sweep_curves,
    to_csv,
)


def test_small_dimension_all_solvers_succeed():
    records = bench_solvers(dims=(10,), trials=5, seed=0, warmup=1, repeats=1)
    assert len(records) == 5 * 3
    for r in records:
        assert r.success
        assert r.achieved_error < 1e-5
        assert r.time_to_tolerance_ns > 0
    rows = summarize(records)
    assert {r["solver"] for r in rows} == {"bisect", "brent", "pg"}
    assert all(r["success_rate"] == 1.0 for r in rows)
    assert all(r["low_ns"] <= r["median_ns"] <= r["high_ns"] for r in rows)


def test_seeded_draws_repeat():
    a = [draw_scores(np.random.default_rng(3), 50) for _ in range(2)]
    assert np.array_equal(a[0][0], a[1][0]) and a[0][1] == a[1][1]
    r1 = bench_solvers(dims=(10,), trials=2, seed=4, warmup=0, repeats=1)
    r2 = bench_solvers(dims=(10,), trials=2, seed=4, warmup=0, repeats=1)
    assert [r.trial_sigma for r in r1] == [r.trial_sigma for r in r2]


def test_reference_solution_is_feasible():
    rng = np.random.default_rng(5)
    for alpha in (1.5, 2.0):
        theta, _ = draw_scores(rng, 1000)
        p = reference_solution(tsallis(alpha), theta)
        assert p.min() >= 0 and abs(p.sum() - 1) < 1e-10


def test_budget_returns_partial_results():
    records = bench_solvers(dims=(10, 100), trials=50, seed=0, warmup=0, repeats=1,
                            time_budget=0.0)
    assert len(records) < 2 * 50 * 3


def test_trials_validated():
    with pytest.raises(ValueError):
        bench_solvers(trials=0)


def test_summary_marks_failures():
    records = [BenchRecord("pg", 10, -1, math.nan, 1.0, 0, math.nan, False),
               BenchRecord("pg", 10, 100, 1e-6, 1.0, 1, 1e-5, True)]
    (row,) = summarize(records)
    assert row["success_rate"] == 0.5 and row["median_ns"] == 100


def test_csv_round_trip():
    records = bench_solvers(dims=(10,), trials=1, seed=0, warmup=0, repeats=1)
    rows = [r.to_dict() for r in records]
    back = read_csv(to_csv(rows))
    assert len(back) == len(rows)
    for a, b in zip(rows, back):
        assert b["solver"] == a["solver"]
        assert b["success"] is a["success"]
        assert b["achieved_error"] == a["achieved_error"]
        assert b["time_to_tolerance_ns"] == a["time_to_tolerance_ns"]


# --------------------------------------------------------------------------
# binary curves

GRID = np.linspace(-3, 3, 601)


def column(rows, param, key):
    return np.array([r[key] for r in rows if r["parameter"] == param])


def test_sparsemax_curve_saturates_at_one():
    rows = sweep_curves("tsallis", [2.0], GRID)
    t = column(rows, 2.0, "t")
    y1 = column(rows, 2.0, "y1")
    assert np.all(y1[t >= 1.0 - 1e-12] == 1.0)
    assert np.all(y1[t < 1.0 - 1e-9] < 1.0)


def test_softmax_curve_never_saturates():
    rows = sweep_curves("tsallis", [1.0], np.linspace(-30, 30, 601))
    assert np.all(column(rows, 1.0, "y1") < 1.0)


@pytest.mark.parametrize("family, params", [("tsallis", [1.0, 1.5, 2.0, 3.0]),
                                            ("norm", [1.5, 2.0, 4.0])])
def test_loss_curves_nonincreasing(family, params):
    rows = sweep_curves(family, params, GRID)
    for param in params:
        loss = column(rows, param, "loss")
        assert np.all(np.diff(loss) <= 1e-9)
        assert np.all(loss >= -1e-12)
        ent = column(rows, param, "entropy")
        assert np.all(ent >= -1e-12)


def test_sweep_csv_round_trip():
    rows = sweep_curves("tsallis", [1.5], GRID[:11])
    back = read_csv(to_csv(rows))
    assert back == rows


def test_to_csv_of_nothing():
    assert bench.to_csv([]) == ""
