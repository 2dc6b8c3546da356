from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import cubic_spline_jerk, quintic_rest_to_rest
from visplan.errors import SplineError, TrajectoryParseError
from visplan.spline import SplineTrajectory, construct_spline, read_csv_trajectory

REST = np.zeros((3, 3))


def rest(p):
    s = np.zeros((3, 3))
    s[0] = p
    return s


def random_spline(r, m=None):
    m = m or int(r.integers(1, 6))
    T = r.uniform(0.3, 3.0, size=m)
    q = r.normal(scale=3.0, size=(m - 1, 3))
    head = r.normal(size=(3, 3))
    tail = r.normal(size=(3, 3))
    return construct_spline(q, T, head, tail), q, T, head, tail


def test_rest_to_rest_closed_form():
    T, d = 2.0, 1.0
    sp = construct_spline(np.zeros((0, 3)), [T], rest([0, 0, 0]), rest([d, 0, 0]))
    # 10 s^3 - 15 s^4 + 6 s^5 with s = t / T
    want = np.array([0, 0, 0, 10 / T**3, -15 / T**4, 6 / T**5]) * d
    assert np.allclose(sp.coeffs[0, :, 0], want, atol=1e-14)
    assert np.isclose(sp.jerk_integral(), quintic_rest_to_rest(d, T))


def test_symmetric_line_stays_on_line():
    sp = construct_spline([[5.0, 0, 0]], [1.5, 1.5], rest([0, 0, 0]), rest([10, 0, 0]))
    t = np.linspace(0, sp.total_time, 200)
    assert not sp.evaluate(t)[:, 1:].any()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_continuity_boundaries_and_interpolation(seed):
    r = np.random.default_rng(seed)
    sp, q, T, head, tail = random_spline(r)
    assert sp.joint_mismatch() <= 1e-9
    for k in range(3):
        assert np.allclose(sp.evaluate(0.0, k), head[k], atol=1e-9)
        assert np.allclose(sp.evaluate(sp.total_time, k), tail[k], atol=1e-8 * max(1, np.abs(tail).max()))
    for j in range(len(q)):
        assert np.allclose(sp.piece_eval(j, T[j]), q[j], atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_min_jerk_beats_cubic_spline(seed):
    r = np.random.default_rng(seed)
    m = int(r.integers(2, 6))
    T = r.uniform(0.5, 2.0, size=m)
    pts = r.normal(scale=2.0, size=(m + 1, 3))
    cubic, head, tail = cubic_spline_jerk(pts, T)
    sp = construct_spline(pts[1:-1], T, head, tail)
    assert sp.jerk_integral() <= cubic * (1 + 1e-9) + 1e-9


def test_third_derivative_matches_finite_difference(rng):
    for _ in range(20):
        sp, *_ = random_spline(rng)
        t = rng.uniform(0.01, sp.total_time - 0.01)
        j, tl = sp.locate(t)
        h = 1e-6
        if tl < h or tl > sp.durations[j] - h:
            continue
        fd = (sp.evaluate(t + h, 2) - sp.evaluate(t - h, 2)) / (2 * h)
        got = sp.evaluate(t, 3)
        assert np.linalg.norm(got - fd) <= 1e-4 * max(1.0, np.linalg.norm(got))


def test_domain_and_construction_errors():
    sp = construct_spline(np.zeros((0, 3)), [1.0], REST, rest([1, 0, 0]))
    with pytest.raises(ValueError):
        sp.evaluate(1.5)
    with pytest.raises(ValueError):
        sp.evaluate(-0.1)
    with pytest.raises(SplineError):
        construct_spline(np.zeros((2, 3)), [1.0, 1.0], REST, REST)
    with pytest.raises(SplineError):
        construct_spline(np.zeros((1, 3)), [0.0, 0.0], REST, REST)


def test_json_round_trip_is_exact(tmp_path, rng):
    sp, *_ = random_spline(rng, 4)
    sp.save_json(tmp_path / "t.json")
    back = SplineTrajectory.from_dict(json.loads((tmp_path / "t.json").read_text()))
    assert np.array_equal(back.coeffs, sp.coeffs) and np.array_equal(back.durations, sp.durations)
    with pytest.raises(TrajectoryParseError):
        SplineTrajectory.from_dict({"pieces": [{"duration": 1.0, "coeffs": [[1, 2]]}]})


def test_csv_round_trip_and_truncation(tmp_path, rng):
    sp, *_ = random_spline(rng, 3)
    path = tmp_path / "t.csv"
    sp.save_csv(path, 0.01)
    s = read_csv_trajectory(path)
    t, p, v, a = sp.sample(0.01)
    assert np.array_equal(s.t, t) and np.array_equal(s.pos, p) and np.array_equal(s.acc, a)
    text = path.read_text()
    path.write_text(text[: len(text) // 2].rsplit(",", 3)[0] + "\n")
    with pytest.raises(TrajectoryParseError):
        read_csv_trajectory(path)
    path.write_text("a,b\n1,2\n")
    with pytest.raises(TrajectoryParseError):
        read_csv_trajectory(path)
