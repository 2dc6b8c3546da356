"""End-to-end planning: SCPs, route, grid search, corridor, trajectory."""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bench import RunReport, TaskSpec, evaluate_run
from .config import PlannerConfig
from .corridor import Corridor, build_corridor, check_corridor
from .errors import PlannerError, UnreachableError
from .path_search import GridPath, dilate_grid, find_path, shortcut_path
from .pointcloud import PointCloudMap, build_voxel_grid
from .routing import Tour, WaypointSet, pull_clear, refine_waypoints, solve_atsp
from .spline import SplineTrajectory
from .star_convex import StarPolytope, build_scp
from .trajopt import TrajOptResult, optimize_trajectory

STAGES = ("scp", "route", "search", "corridor", "trajopt")


@dataclass
class PlanResult:
    task: TaskSpec
    config: PlannerConfig
    timings: dict = field(default_factory=dict)
    scps: list[StarPolytope] = field(default_factory=list)  # tour order
    tour: Tour | None = None
    waypoints: WaypointSet | None = None
    paths: list[GridPath] = field(default_factory=list)
    corridor: Corridor | None = None
    trajopt: TrajOptResult | None = None
    error: PlannerError | None = None
    total_ms: float = 0.0

    @property
    def trajectory(self) -> SplineTrajectory | None:
        return None if self.trajopt is None else self.trajopt.trajectory

    @property
    def ok(self) -> bool:
        return self.error is None and self.trajopt is not None


def default_threads() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:  # pragma: no cover - non-Linux
        return max(1, os.cpu_count() or 1)


def choose_resolution(bounds, cfg: PlannerConfig) -> float:
    if cfg.voxel_resolution > 0:
        return cfg.voxel_resolution
    lo, hi = (np.asarray(b, dtype=float) for b in bounds)
    res = 0.25
    while np.prod(np.ceil((hi - lo) / res) + 1) > cfg.max_voxels:
        res *= 2.0
    return res


def _map_points(pool, fn, items):
    return list(pool.map(fn, items)) if pool is not None else [fn(x) for x in items]


def plan(cloud: PointCloudMap, task: TaskSpec, cfg: PlannerConfig | None = None, threads: int | None = None,
         raw_map: PointCloudMap | None = None) -> PlanResult:
    """Run every stage; stage errors are captured in ``result.error``."""
    cfg = cfg or PlannerConfig()
    threads = default_threads() if threads is None else max(1, int(threads))
    out = PlanResult(task, cfg)
    t_all = time.perf_counter()
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    stage = "scp"
    try:
        t0 = time.perf_counter()
        scps_by_spot = _map_points(
            pool, lambda c: build_scp(cloud, c, cfg.bound_radius, cfg.flip_radius, cfg.augment_count), task.spots
        )
        out.timings["scp"] = 1e3 * (time.perf_counter() - t0)

        stage = "route"
        t0 = time.perf_counter()
        out.tour = solve_atsp(task.spots, task.start, task.goal, restarts=cfg.atsp_restarts, seed=cfg.seed)
        order = out.tour.order
        out.scps = [scps_by_spot[i] for i in order]
        if out.scps:
            out.waypoints = refine_waypoints(
                out.scps, task.start, task.goal, cfg.d_min, cfg.alpha, cfg.route_penalty, cfg.route_epsilon,
                cfg.route_restarts,
            )
            if cfg.waypoint_clearance > 0 and not cloud.is_empty:
                ws = out.waypoints.waypoints
                for i, scp in enumerate(out.scps):
                    ws[i] = pull_clear(scp, ws[i], cloud.nearest_distance, cfg.waypoint_clearance, cfg.d_min, cfg.alpha)
            route = out.waypoints.route
        else:
            route = np.vstack([task.start, task.goal])
        out.timings["route"] = 1e3 * (time.perf_counter() - t0)

        stage = "search"
        t0 = time.perf_counter()
        res = choose_resolution(task.bounds, cfg)
        base = build_voxel_grid(cloud, res, task.bounds)
        # prefer roomy paths; fall back to tighter grids leg by leg
        levels = [(k, dilate_grid(base, k)) for k in range(cfg.search_dilation, -1, -1)]

        def clear_link(p, c):
            return cloud.segment_clear(p, c, cfg.d_min)

        def leg(l):
            err = None
            for k, grid in levels:
                try:
                    p = find_path(grid, route[l], route[l + 1], snap_cells=k + 3, snap_accept=clear_link)
                except UnreachableError as exc:
                    err = exc
                    continue
                return shortcut_path(cloud, p, max(k - 0.5, 0.2) * res)
            err.spot = int(order[l]) if l < len(order) else (int(order[l - 1]) if l > 0 else None)
            raise err

        out.paths = _map_points(pool, leg, range(len(route) - 1))
        out.timings["search"] = 1e3 * (time.perf_counter() - t0)

        stage = "corridor"
        t0 = time.perf_counter()
        dwell = [float(task.dwell[i]) for i in order]
        out.corridor = build_corridor(
            cloud, out.scps, route, out.paths, dwell, cfg.gen_radius, cfg.d_min, cfg.alpha, cfg.max_polys_per_leg
        )
        out.timings["corridor"] = 1e3 * (time.perf_counter() - t0)

        stage = "trajopt"
        t0 = time.perf_counter()
        zero = np.zeros(3)
        head = np.array([task.start, zero, zero])
        tail = np.array([task.goal, zero, zero])
        out.trajopt = optimize_trajectory(
            out.corridor, out.scps, head, tail, cfg.trajopt(), sight_map=raw_map, sight_clearance=cfg.sight_clearance
        )
        out.timings["trajopt"] = 1e3 * (time.perf_counter() - t0)
    except PlannerError as exc:
        out.error = exc
        out.timings.setdefault(stage, 1e3 * (time.perf_counter() - t0))
    finally:
        if pool is not None:
            pool.shutdown()
    out.total_ms = 1e3 * (time.perf_counter() - t_all)
    return out


def corridor_problems(result: PlanResult, cloud: PointCloudMap) -> list[str]:
    return [] if result.corridor is None else check_corridor(result.corridor, cloud)


def report_for(result: PlanResult, raw_map: PointCloudMap) -> RunReport:
    """Independent scoring of a plan plus its timings and failure reason."""
    cfg = result.config
    if result.ok:
        rep = evaluate_run(result.trajectory, result.task, raw_map, cfg.sample_dt, cfg.sight_clearance)
        chk = result.trajopt.check
        rep.extra = {
            "pieces": result.trajectory.pieces,
            "corridor_elements": len(result.corridor),
            "polytopes": len(result.corridor.polytopes),
            "tour": list(result.tour.order),
            "trajopt_iterations": result.trajopt.iterations,
            "escalation_rounds": result.trajopt.rounds,
            "joint_mismatch": chk.joint_mismatch,
        }
    else:
        rep = RunReport(status="failed", error=None if result.error is None else result.error.to_dict())
    rep.timings = {k: result.timings[k] for k in STAGES if k in result.timings}
    rep.total_ms = result.total_ms
    return rep
