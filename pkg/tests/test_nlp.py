from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from visplan.nlp import SolveOptions, minimize


def quadratic(Q, b):
    return lambda x: (0.5 * x @ Q @ x - b @ x, Q @ x - b)


def rosenbrock(x):
    a, b = x
    f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
    g = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
    return f, g


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.integers(2, 12))
def test_convex_quadratic(seed, n):
    r = np.random.default_rng(seed)
    A = r.normal(size=(n, n))
    Q = A @ A.T + n * np.eye(n)
    b = r.normal(size=n)
    # an Armijo test on f cannot resolve gradients much below sqrt(eps * |f| * |Q|) ~ 1e-7 here
    res = minimize(quadratic(Q, b), np.zeros(n), SolveOptions(gtol=1e-6, max_iters=2000))
    assert res.converged
    # for a quadratic the error is bounded by |g| / lambda_min exactly
    err = np.linalg.norm(res.argmin - np.linalg.solve(Q, b))
    assert err <= res.gradient_norm / np.linalg.eigvalsh(Q)[0] * (1 + 1e-6) + 1e-14
    assert all(x >= y for x, y in zip(res.history[:-1], res.history[1:]))


def test_rosenbrock():
    res = minimize(rosenbrock, np.array([-1.2, 1.0]), SolveOptions(gtol=1e-9, max_iters=5000))
    assert np.linalg.norm(res.argmin - 1.0) <= 1e-5


def test_clamped_cubic_penalty():
    # distance to a target plus a one-sided cubic wall at x0 >= 1
    def f(x):
        viol = max(1.0 - x[0], 0.0)
        v = np.sum((x - [0.0, 2.0]) ** 2) + 1e4 * viol**3
        g = 2 * (x - [0.0, 2.0])
        g[0] -= 3e4 * viol**2
        return v, g

    res = minimize(f, np.array([3.0, 0.0]), SolveOptions(gtol=1e-8, max_iters=1000))
    assert res.converged
    assert abs(res.argmin[0] - 1.0) < 0.01 and abs(res.argmin[1] - 2.0) < 1e-6


def test_deterministic_and_bad_inputs():
    a = minimize(rosenbrock, np.array([-1.2, 1.0]))
    b = minimize(rosenbrock, np.array([-1.2, 1.0]))
    assert np.array_equal(a.argmin, b.argmin) and a.history == b.history
    with pytest.raises(ValueError):
        minimize(rosenbrock, np.array([np.nan, 1.0]))
    with pytest.raises(ValueError):
        minimize(lambda x: (np.inf, x), np.zeros(2))


def test_iteration_cap_reports_status():
    res = minimize(rosenbrock, np.array([-1.2, 1.0]), SolveOptions(max_iters=3))
    assert res.status == "max_iters" and res.iterations == 3
    assert res.value <= rosenbrock(np.array([-1.2, 1.0]))[0]
