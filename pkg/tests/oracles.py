"""Slow, obviously-correct reference implementations used by the tests."""

from __future__ import annotations

import itertools
from collections import deque

import numpy as np


def linear_range(points: np.ndarray, center, radius: float) -> set[tuple]:
    d = np.linalg.norm(points - np.asarray(center, dtype=float), axis=1)
    return {tuple(p) for p in points[d <= radius]}


def brute_segment_clear(points: np.ndarray, a, b, clearance: float) -> bool:
    """Distance of every point to the segment, no index."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(points) == 0:
        return True
    ab = b - a
    denom = float(ab @ ab)
    t = np.zeros(len(points)) if denom == 0 else np.clip((points - a) @ ab / denom, 0, 1)
    d = np.linalg.norm(points - (a + t[:, None] * ab), axis=1)
    return bool(np.all(d > clearance))


def sight_visible(points: np.ndarray, center, x, radius: float, clearance: float) -> bool:
    """Ray-cast visibility: inside the sensible ball and a clear sight line."""
    return float(np.linalg.norm(np.asarray(x) - center)) < radius and brute_segment_clear(points, center, x, clearance)


def brute_atsp(cost: np.ndarray) -> float:
    """Cheapest open path 0 -> permutation of 1..n -> n+1."""
    n = cost.shape[0] - 2
    best = np.inf
    for perm in itertools.permutations(range(1, n + 1)):
        seq = (0, *perm, n + 1)
        best = min(best, sum(cost[a, b] for a, b in zip(seq[:-1], seq[1:])))
    return float(best)


def central_diff(f, x: np.ndarray, h: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def bfs_reachable(occ: np.ndarray, start: tuple, goal: tuple) -> bool:
    """26-connected flood fill over free cells."""
    if occ[start] or occ[goal]:
        return False
    seen = {start}
    todo = deque([start])
    moves = [d for d in itertools.product((-1, 0, 1), repeat=3) if d != (0, 0, 0)]
    while todo:
        c = todo.popleft()
        if c == goal:
            return True
        for d in moves:
            nb = (c[0] + d[0], c[1] + d[1], c[2] + d[2])
            if all(0 <= nb[i] < occ.shape[i] for i in range(3)) and not occ[nb] and nb not in seen:
                seen.add(nb)
                todo.append(nb)
    return False


def dense_exit(normals, offsets, pts: np.ndarray, step: float = 1e-3):
    """First sample along the polyline that leaves {n.x <= b}; previous sample returned."""
    prev = pts[0]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(1, int(np.ceil(np.linalg.norm(b - a) / step)))
        for s in np.linspace(0, 1, n + 1)[1:]:
            x = a + s * (b - a)
            if np.any(normals @ x > offsets):
                return prev
            prev = x
    return pts[-1]


def cubic_spline_jerk(points: np.ndarray, durations: np.ndarray):
    """Squared-jerk integral of the C2 cubic spline through ``points`` with zero end
    velocities, plus its end states (pos, vel, acc) so a competitor can match them."""
    from scipy.interpolate import CubicSpline

    t = np.concatenate([[0.0], np.cumsum(durations)])
    cs = CubicSpline(t, points, bc_type=((1, np.zeros(3)), (1, np.zeros(3))))
    total = 0.0
    for j in range(len(durations)):
        jerk = 6.0 * cs.c[0, j]  # constant third derivative per cubic piece
        total += float(np.sum(jerk * jerk)) * durations[j]
    head = np.array([cs(t[0], k) for k in range(3)])
    tail = np.array([cs(t[-1], k) for k in range(3)])
    return total, head, tail


def quintic_rest_to_rest(delta: float, T: float) -> float:
    """Minimum jerk integral moving ``delta`` in time T from rest to rest."""
    return 720.0 * delta * delta / T**5
