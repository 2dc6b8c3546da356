"""Spot visiting order (open-path ATSP) and waypoint refinement on the SCPs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleRouteError
from .nlp import SolveOptions, minimize
from .star_convex import EPS_CENTER, StarPolytope, lse_values, point_in_scp, visibility_violation_batch


@dataclass
class Tour:
    order: list[int]  # indices into the spot list
    start: np.ndarray
    goal: np.ndarray
    cost: float


def path_cost(seq, cost: np.ndarray) -> float:
    return float(sum(cost[a, b] for a, b in zip(seq[:-1], seq[1:])))


def _local_search(seq: list[int], cost: np.ndarray) -> list[int]:
    """2-opt and Or-opt on an open path whose first and last nodes are fixed.

    Applies the best improving move of either kind until none is left.
    """
    seq = np.array(seq, dtype=np.intp)
    n = len(seq)
    while n >= 4:
        leg_f = cost[seq[:-1], seq[1:]]
        leg_b = cost[seq[1:], seq[:-1]]
        fwd = np.concatenate([[0.0], np.cumsum(leg_f)])
        bwd = np.concatenate([[0.0], np.cumsum(leg_b)])
        best_delta, best_move = -1e-10, None
        # 2-opt: reverse seq[i..j], 1 <= i < j <= n - 2
        i = np.arange(1, n - 2)[:, None]
        j = np.arange(2, n - 1)[None, :]
        si, sj = seq[i], seq[j]
        a, b = seq[i - 1], seq[j + 1]
        delta = cost[a, sj] + cost[si, b] - cost[a, si] - cost[sj, b] + (bwd[j] - bwd[i]) - (fwd[j] - fwd[i])
        delta = np.where(j > i, delta, np.inf)
        k = int(np.argmin(delta))
        if delta.flat[k] < best_delta:
            best_delta = float(delta.flat[k])
            best_move = ("rev", int(i.flat[k // delta.shape[1]]), int(j.flat[k % delta.shape[1]]))
        # Or-opt: move seq[i..j] (1 to 3 nodes) after seq[k], optionally reversed
        ks = np.arange(0, n - 1)
        for length in (1, 2, 3):
            if n - length - 1 < 1:
                break
            i = np.arange(1, n - length)[:, None]
            j = i + length - 1
            si, sj = seq[i], seq[j]
            a, b = seq[i - 1], seq[j + 1]
            gain = cost[a, si] + cost[sj, b] - cost[a, b]
            p, q = seq[ks][None, :], seq[ks + 1][None, :]
            valid = (ks[None, :] < i - 1) | (ks[None, :] > j)
            add_f = cost[p, si] + cost[sj, q] - cost[p, q] - gain
            add_f = np.where(valid, add_f, np.inf)
            m = int(np.argmin(add_f))
            if add_f.flat[m] < best_delta:
                best_delta = float(add_f.flat[m])
                best_move = ("move", int(i.flat[m // len(ks)]), length, int(ks[m % len(ks)]), False)
            if length > 1:
                add_r = cost[p, sj] + cost[si, q] - cost[p, q] + (bwd[j] - bwd[i]) - (fwd[j] - fwd[i]) - gain
                add_r = np.where(valid, add_r, np.inf)
                m = int(np.argmin(add_r))
                if add_r.flat[m] < best_delta:
                    best_delta = float(add_r.flat[m])
                    best_move = ("move", int(i.flat[m // len(ks)]), length, int(ks[m % len(ks)]), True)
        if best_move is None:
            break
        lst = seq.tolist()
        if best_move[0] == "rev":
            _, i0, j0 = best_move
            lst[i0:j0 + 1] = lst[i0:j0 + 1][::-1]
        else:
            _, i0, length, k0, rev = best_move
            j0 = i0 + length - 1
            seg = lst[i0:j0 + 1]
            if rev:
                seg = seg[::-1]
            rest = lst[:i0] + lst[j0 + 1:]
            pos = k0 + 1 if k0 < i0 else k0 + 1 - length
            lst = rest[:pos] + seg + rest[pos:]
        seq = np.array(lst, dtype=np.intp)
    return [int(v) for v in seq]


def solve_atsp(spots, start, goal, cost: np.ndarray | None = None, restarts: int = 16, seed: int = 0) -> Tour:
    """Open-path tour start -> all spots -> goal.

    Node 0 is the start, 1..N the spots, N+1 the goal. Nearest-neighbour and
    seeded random initial tours are polished to 2-opt/Or-opt local optimality;
    the cheapest result wins.
    """
    spots = np.asarray(spots, dtype=float).reshape(-1, 3)
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    n = len(spots)
    if n == 0:
        return Tour([], start, goal, float(np.linalg.norm(goal - start)))
    nodes = np.vstack([start, spots, goal])
    if cost is None:
        cost = np.linalg.norm(nodes[:, None, :] - nodes[None, :, :], axis=2)
    cost = np.asarray(cost, dtype=float)
    # nearest neighbour from the start
    seq = [0]
    left = set(range(1, n + 1))
    while left:
        cur = seq[-1]
        nxt = min(left, key=lambda j: (cost[cur, j], j))
        seq.append(nxt)
        left.remove(nxt)
    seq.append(n + 1)
    candidates = [seq]
    rng = np.random.default_rng(seed)
    for _ in range(restarts if n > 3 else 0):
        perm = list(rng.permutation(np.arange(1, n + 1)))
        candidates.append([0] + [int(p) for p in perm] + [n + 1])
    best_seq, best_cost = None, np.inf
    for cand in candidates:
        s = _local_search(cand, cost)
        c = path_cost(s, cost)
        if c < best_cost - 1e-12:
            best_seq, best_cost = s, c
    return Tour([k - 1 for k in best_seq[1:-1]], start, goal, best_cost)


# waypoint refinement --------------------------------------------------------------


@dataclass
class WaypointSet:
    waypoints: np.ndarray  # (N, 3), tour order
    start: np.ndarray
    goal: np.ndarray
    penalty_weights: np.ndarray
    epsilon: float
    initial: np.ndarray = field(repr=False, default=None)
    iterations: int = 0
    status: str = ""

    @property
    def route(self) -> np.ndarray:
        return np.vstack([self.start, self.waypoints, self.goal])


def smooth_length(points: np.ndarray, epsilon: float) -> float:
    diff = np.diff(points, axis=0)
    return float(np.sum(np.sqrt(np.sum(diff * diff, axis=1) + epsilon)))


def route_cost(w_flat, scps, start, goal, weights, epsilon, d_min, alpha):
    """J_w and its gradient for flattened waypoints."""
    w = np.asarray(w_flat, dtype=float).reshape(-1, 3)
    pts = np.vstack([start, w, goal])
    diff = np.diff(pts, axis=0)
    lens = np.sqrt(np.sum(diff * diff, axis=1) + epsilon)
    value = float(np.sum(lens))
    unit = diff / lens[:, None]
    grad = unit[:-1] - unit[1:]
    for i, scp in enumerate(scps):
        v, g = visibility_violation_batch(scp, w[i][None, :], d_min, alpha, weights[i])
        value += float(v[0])
        grad[i] += g[0]
    return value, grad.ravel()


def _initial_waypoint(scp: StarPolytope, prev: np.ndarray, d_min: float, alpha: float) -> np.ndarray:
    c = scp.center
    v = prev - c
    d = float(np.linalg.norm(v))
    if d <= EPS_CENTER:
        return c + np.array([2 * EPS_CENTER, 0.0, 0.0])
    u = v / d
    if point_in_scp(scp, prev) and lse_values(scp, prev, alpha)[0] >= d_min + 1e-3:
        return prev.copy()
    # the chord toward a star-convex set's center crosses its boundary once
    rho = min(scp.boundary_radius(u), d)
    back = 0.01
    while rho - back > 2 * EPS_CENTER:
        x = c + (rho - back) * u
        if lse_values(scp, x, alpha)[0] >= d_min + 1e-3:
            return x
        back *= 2.0
    return c + 2 * EPS_CENTER * u


def refine_waypoints(
    scps: list[StarPolytope],
    start,
    goal,
    d_min: float = 0.1,
    alpha: float = 100.0,
    penalty: float = 1e4,
    epsilon: float = 1e-4,
    max_restarts: int = 12,
    gtol: float = 1e-5,
    max_iters: int = 500,
) -> WaypointSet:
    """Minimise smooth route length plus visibility violation over one waypoint per SCP."""
    if not scps:
        raise ValueError("refine_waypoints needs at least one SCP")
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    # The faceted SCP boundary is not convex, so polish two different starts
    # and keep the shorter feasible route.
    best, err = None, None
    for init in _initial_routes(scps, start, goal, d_min, alpha):
        try:
            ws = _solve_route(scps, start, goal, init, d_min, alpha, penalty, epsilon, max_restarts, gtol, max_iters)
        except InfeasibleRouteError as exc:
            err = err or exc
            continue
        if best is None or smooth_length(ws.route, epsilon) < smooth_length(best.route, epsilon) - 1e-12:
            if best is not None:
                ws.iterations += best.iterations
            best = ws
        else:
            best.iterations += ws.iterations
    if best is None:
        raise err
    return best


def _initial_routes(scps, start, goal, d_min, alpha) -> list[np.ndarray]:
    chained = []
    prev = start
    for scp in scps:
        prev = _initial_waypoint(scp, prev, d_min, alpha)
        chained.append(prev)
    # closest point to each spot on the line joining its neighbours, pulled inside
    anchors = [start] + [s.center for s in scps] + [goal]
    spans = []
    for i, scp in enumerate(scps):
        a, b = anchors[i], anchors[i + 2]
        ab = b - a
        t = np.clip((scp.center - a) @ ab / max(ab @ ab, 1e-12), 0.0, 1.0)
        spans.append(_initial_waypoint(scp, a + t * ab, d_min, alpha))
    return [np.array(chained), np.array(spans)]


def _solve_route(scps, start, goal, init, d_min, alpha, penalty, epsilon, max_restarts, gtol, max_iters):
    weights = np.full(len(scps), float(penalty))
    x = init.ravel().copy()
    opts = SolveOptions(gtol=gtol, max_iters=max_iters)
    total_iters = 0
    status = ""
    for _ in range(max_restarts + 1):
        res = minimize(
            lambda z: route_cost(z, scps, start, goal, weights, epsilon, d_min, alpha), x, opts
        )
        total_iters += res.iterations
        status = res.status
        x = res.argmin
        w = x.reshape(-1, 3)
        bad = [i for i, scp in enumerate(scps) if not _feasible(scp, w[i], d_min, alpha)]
        for i in bad:
            # cheap repair: slide toward the spot along the chord (stays in the star-convex set)
            fixed = _repair(scps[i], w[i], d_min, alpha)
            if fixed is not None:
                w[i] = fixed
        bad = [i for i in bad if not _feasible(scps[i], w[i], d_min, alpha)]
        if not bad:
            return WaypointSet(w.copy(), start, goal, weights, epsilon, init, total_iters, status)
        weights[bad] *= 2.0
    i = bad[0]
    raise InfeasibleRouteError(
        f"waypoint for spot at {scps[i].center.tolist()} stays outside its SCP", spot=i
    )


def pull_clear(
    scp: StarPolytope, w: np.ndarray, clearance_fn, clearance: float, d_min: float, alpha: float, steps: int = 40
) -> np.ndarray:
    """Slide ``w`` along its chord toward the SCP center until ``clearance_fn(w) >= clearance``.

    The chord to the center stays in a star-convex set, so feasibility is
    kept; the first feasible clear point wins, else the clearest one seen.
    """
    if clearance_fn(w) >= clearance:
        return w
    best, best_c = w, clearance_fn(w)
    for k in range(1, steps + 1):
        x = w + (k / steps) * (scp.center - w)
        if not _feasible(scp, x, d_min, alpha):
            continue
        c = clearance_fn(x)
        if c >= clearance:
            return x
        if c > best_c:
            best, best_c = x, c
    return best


def _repair(scp: StarPolytope, w: np.ndarray, d_min: float, alpha: float, steps: int = 60):
    c = scp.center
    for k in range(1, steps + 1):
        x = w + (k / steps) ** 2 * (c - w)
        if _feasible(scp, x, d_min, alpha) and lse_values(scp, x, alpha)[0] >= d_min:
            return x
    return None


def _feasible(scp: StarPolytope, w: np.ndarray, d_min: float, alpha: float) -> bool:
    return point_in_scp(scp, w) and float(lse_values(scp, w, alpha)[0]) >= d_min - 1e-3
