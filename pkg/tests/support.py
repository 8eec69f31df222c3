"""Shared fixtures data for the test suite."""

import numpy as np

from fyloss import norm, renyi, shannon, squared_norm, tsallis

SEPARABLE = [shannon(), tsallis(1.1), tsallis(1.25), tsallis(1.5), tsallis(2.0), tsallis(3.0)]
NON_SEPARABLE = [norm(1.5), norm(2.0), norm(4.0), squared_norm(1.5), squared_norm(2.0),
                 squared_norm(3.0), renyi(0.25), renyi(0.5)]
ALL_ENTROPIES = SEPARABLE + NON_SEPARABLE


def random_simplex(rng, d, sparse=False):
    """Dirichlet draw; with ``sparse`` some coordinates are zeroed first."""
    p = rng.dirichlet(np.full(d, 0.7))
    if sparse:
        p[rng.random(d) < 0.4] = 0.0
        if p.sum() == 0:
            p[rng.integers(d)] = 1.0
        p /= p.sum()
    return p


def central_difference(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def central_difference_rows(f_rows, x, h=1e-6):
    """Central differences with every shifted point evaluated in one call.

    ``f_rows`` maps a stack of points (one per row) to their values.
    """
    steps = h * np.eye(x.size)
    values = f_rows(np.vstack([x + steps, x - steps]))
    return (values[: x.size] - values[x.size:]) / (2 * h)


def relative_error(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


# acceptance results, printed by the terminal summary hook in conftest.py
ACCEPTANCE = {}


class criterion:
    """Record one PASS/FAIL line for an acceptance criterion.

    ``detail`` can be filled in inside the block; an exception marks the
    criterion as failed and propagates.
    """

    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.detail = ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        if exc_type is None:
            detail = self.detail
        else:
            reason = str(exc).splitlines()[0] if str(exc) else exc_type.__name__
            detail = f"{self.detail} {reason}".strip()
        line = f"criterion {self.number} {status}: {self.title}"
        if detail:
            line += f" ({detail})"
        ACCEPTANCE[self.number] = line
        print(line)
        return False
