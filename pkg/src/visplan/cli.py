"""Command-line front end: ``gen``, ``plan`` and ``eval``.

Exit codes: 0 success, 1 planning failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields

import numpy as np

from .bench import RunReport, SCALES, evaluate_run, generate_scene, read_task, scene_spec, write_scene
from .config import PlannerConfig
from .errors import PlannerError, TrajectoryParseError
from .pipeline import default_threads, plan, report_for
from .pointcloud import PointCloudMap, load_map
from .spline import SplineTrajectory, read_csv_trajectory
from .star_convex import export_scp_mesh

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="visplan", description="Visibility-guaranteed inspection trajectory planner")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random pillar/ring scene bundle")
    g.add_argument("--scale", required=True, choices=sorted(SCALES))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--spots", type=int, help="override the spot count")
    g.add_argument("--pillars", type=int, help="override the pillar count")
    g.add_argument("--rings", type=int, help="override the ring count")
    g.add_argument("--dwell", type=float, help="dwell time per spot in seconds")

    p = sub.add_parser("plan", help="plan an inspection trajectory for a scene bundle")
    p.add_argument("scene", help="scene directory with map.xyz (or map.ply) and task.json")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON file with flat PlannerConfig keys")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: available CPUs)")
    p.add_argument("--csv-dt", type=float, default=0.01, help="sample spacing of trajectory.csv")
    opt = p.add_argument_group("config overrides")
    for f in fields(PlannerConfig):
        opt.add_argument(_flag(f.name), dest=f"cfg_{f.name}", type=int if f.type == "int" else float, default=None)

    e = sub.add_parser("eval", help="score a trajectory against a scene with map-level oracles")
    e.add_argument("scene")
    e.add_argument("trajectory", help="trajectory.json (piece coefficients) or a CSV with t,x,y,z,vx,vy,vz,ax,ay,az")
    e.add_argument("--out", help="report path (default: print to stdout)")
    e.add_argument("--config", help="JSON config (uses its inflation-free sight settings)")
    e.add_argument("--dt", type=float, default=None, help="sample spacing (default: config sample_dt)")
    return ap


def _scene_map(scene: str) -> str:
    for name in ("map.xyz", "map.ply"):
        path = os.path.join(scene, name)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"{scene}: no map.xyz or map.ply")


def cmd_gen(args) -> int:
    over = {}
    if args.spots is not None:
        over["spot_count"] = args.spots
    if args.pillars is not None:
        over["pillar_count"] = args.pillars
    if args.rings is not None:
        over["ring_count"] = args.rings
    if args.dwell is not None:
        over["dwell"] = args.dwell
    try:
        spec = scene_spec(args.scale, args.seed, **over)
        scene = generate_scene(spec)
    except ValueError as exc:
        print(f"visplan gen: {exc}", file=sys.stderr)
        return EXIT_USAGE
    write_scene(scene, args.out)
    print(f"wrote {args.out}: {len(scene.points)} points, {len(scene.task.spots)} spots")
    return EXIT_OK


def _load_config(path, overrides) -> PlannerConfig:
    if path:
        return PlannerConfig.load(path, overrides)
    return PlannerConfig.from_dict(overrides)


def run_plan(scene: str, out: str, cfg: PlannerConfig, threads: int | None = None, csv_dt: float = 0.01):
    """Plan one scene bundle and write every artifact.

    Returns ``(exit_code, result, report)``; ``result`` is None on input errors.
    """
    os.makedirs(out, exist_ok=True)
    report_path = os.path.join(out, "report.json")
    try:
        task = read_task(os.path.join(scene, "task.json"))
        cloud = load_map(_scene_map(scene), cfg.inflation_offset, allow_empty=True)
    except (OSError, ValueError, KeyError, PlannerError) as exc:
        err = exc.to_dict() if isinstance(exc, PlannerError) else {"code": "input_error", "message": str(exc)}
        rep = RunReport(status="failed", error=err)
        rep.save(report_path)
        return EXIT_USAGE, None, rep
    raw = PointCloudMap.from_points(cloud.raw_points, 0.0)
    threads = default_threads() if threads is None else threads
    result = plan(cloud, task, cfg, threads=threads, raw_map=raw)
    rep = report_for(result, raw)
    rep.extra = {**rep.extra, "threads": threads}
    rep.save(report_path)
    if not result.ok:
        return EXIT_FAIL, result, rep
    traj = result.trajectory
    traj.save_json(os.path.join(out, "trajectory.json"))
    traj.save_csv(os.path.join(out, "trajectory.csv"), csv_dt)
    cor = result.corridor.to_dict()
    for el in cor["elements"]:
        if el["type"] == "scp":
            el["spot"] = int(result.tour.order[el["scp"]])  # task index; "scp" is the tour position
    with open(os.path.join(out, "corridor.json"), "w") as fh:
        json.dump(cor, fh, indent=1)
        fh.write("\n")
    for scp, spot in zip(result.scps, result.tour.order):
        export_scp_mesh(scp, os.path.join(out, f"scp_{spot}.obj"))
    return EXIT_OK, result, rep


def cmd_plan(args) -> int:
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    try:
        cfg = _load_config(args.config, overrides)
    except (OSError, ValueError) as exc:
        print(f"visplan plan: bad config: {exc}", file=sys.stderr)
        os.makedirs(args.out, exist_ok=True)
        RunReport(status="failed", error={"code": "input_error", "message": str(exc)}).save(
            os.path.join(args.out, "report.json")
        )
        return EXIT_USAGE
    code, result, rep = run_plan(args.scene, args.out, cfg, args.threads, args.csv_dt)
    if code != EXIT_OK:
        print(f"visplan plan: {rep.error['code']}: {rep.error['message']}", file=sys.stderr)
        return code
    traj = result.trajectory
    print(
        f"planned {traj.pieces} pieces, duration {traj.total_time:.2f} s, "
        f"vis_capability {rep.vis_capability:.3f}, {rep.total_ms:.0f} ms"
    )
    return EXIT_OK


def _read_trajectory(path):
    if path.endswith(".json"):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise TrajectoryParseError(f"{path}: {exc}") from exc
        return SplineTrajectory.from_dict(data)
    return read_csv_trajectory(path)


def cmd_eval(args) -> int:
    try:
        cfg = PlannerConfig.load(args.config) if args.config else PlannerConfig()
        task = read_task(os.path.join(args.scene, "task.json"))
        raw = load_map(_scene_map(args.scene), 0.0, allow_empty=True)
        traj = _read_trajectory(args.trajectory)
    except (OSError, ValueError, KeyError, PlannerError) as exc:
        print(f"visplan eval: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if isinstance(traj, SplineTrajectory):
        dt = args.dt or cfg.sample_dt
        rep = evaluate_run(traj, task, raw, dt, cfg.sight_clearance)
    else:
        dt = args.dt or float(np.median(np.diff(traj.t)))
        rep = evaluate_run((traj.t, traj.pos, traj.vel, traj.acc), task, raw, dt, cfg.sight_clearance)
    if args.out:
        rep.save(args.out)
    else:
        print(json.dumps(rep.to_dict(), indent=1))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"gen": cmd_gen, "plan": cmd_plan, "eval": cmd_eval}[args.command]
    return handler(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
