"""Random pillar/ring inspection scenes, scene bundles and oracle-based scoring."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .pointcloud import PointCloudMap, write_xyz
from .spline import SplineTrajectory

SURFACE_SPACING = 0.2  # 25 points / m^2
SCENE_HEIGHT = 6.0


@dataclass(frozen=True)
class SceneSpec:
    extent: tuple[float, float] = (20.0, 20.0)
    pillar_count: int = 15
    ring_count: int = 6
    spot_count: int = 3
    seed: int = 0
    pillar_radius: tuple[float, float] = (0.3, 0.8)
    pillar_height: tuple[float, float] = (3.0, 5.0)
    ring_radius: tuple[float, float] = (1.0, 2.0)
    ring_tube: float = 0.2
    spot_clearance: float = 1.0  # from obstacle solids; must exceed d_min + inflation
    spot_separation: float = 2.0
    spot_height: tuple[float, float] = (1.0, 4.0)
    dwell: float = 1.0

    def __post_init__(self):
        if self.extent[0] <= 0 or self.extent[1] <= 0:
            raise ValueError("extent must be positive")
        if min(self.pillar_count, self.ring_count, self.spot_count) < 0:
            raise ValueError("counts must be non-negative")


SCALES = {
    "small": dict(extent=(20.0, 20.0), pillar_count=15, ring_count=6, spot_count=3),
    "medium": dict(extent=(40.0, 40.0), pillar_count=60, ring_count=20, spot_count=10),
    "large": dict(extent=(80.0, 80.0), pillar_count=150, ring_count=60, spot_count=20),
}


def scene_spec(scale: str, seed: int = 0, **overrides) -> SceneSpec:
    if scale not in SCALES:
        raise ValueError(f"unknown scale {scale!r}; choose from {sorted(SCALES)}")
    return SceneSpec(seed=seed, **{**SCALES[scale], **overrides})


@dataclass
class Pillar:
    center: np.ndarray  # (x, y)
    radius: float
    height: float

    def distance(self, p: np.ndarray) -> np.ndarray:
        """Distance from points to the solid cylinder (0 inside)."""
        p = np.atleast_2d(p)
        radial = np.maximum(np.linalg.norm(p[:, :2] - self.center, axis=1) - self.radius, 0.0)
        vertical = np.maximum(np.maximum(p[:, 2] - self.height, -p[:, 2]), 0.0)
        return np.hypot(radial, vertical)

    def surface(self, spacing: float) -> np.ndarray:
        n_around = max(8, int(np.ceil(2 * np.pi * self.radius / spacing)))
        n_up = max(2, int(np.ceil(self.height / spacing)) + 1)
        th = np.arange(n_around) * 2 * np.pi / n_around
        z = np.linspace(0.0, self.height, n_up)
        T, Z = np.meshgrid(th, z)
        side = np.c_[self.center[0] + self.radius * np.cos(T.ravel()), self.center[1] + self.radius * np.sin(T.ravel()), Z.ravel()]
        cap = []
        for rr in np.arange(self.radius - spacing, 0.0, -spacing):
            k = max(6, int(np.ceil(2 * np.pi * rr / spacing)))
            a = np.arange(k) * 2 * np.pi / k
            cap.append(np.c_[self.center[0] + rr * np.cos(a), self.center[1] + rr * np.sin(a), np.full(k, self.height)])
        cap.append(np.array([[self.center[0], self.center[1], self.height]]))
        return np.vstack([side, *cap])


@dataclass
class Ring:
    center: np.ndarray
    axis: np.ndarray  # unit
    radius: float
    tube: float

    def _frame(self):
        a = self.axis
        helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = np.cross(a, helper)
        e1 /= np.linalg.norm(e1)
        return e1, np.cross(a, e1)

    def distance(self, p: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(p) - self.center
        h = p @ self.axis
        planar = np.linalg.norm(p - h[:, None] * self.axis, axis=1)
        return np.maximum(np.hypot(planar - self.radius, h) - self.tube, 0.0)

    def surface(self, spacing: float) -> np.ndarray:
        e1, e2 = self._frame()
        n_major = max(12, int(np.ceil(2 * np.pi * (self.radius + self.tube) / spacing)))
        n_minor = max(8, int(np.ceil(2 * np.pi * self.tube / spacing)))
        u = np.arange(n_major) * 2 * np.pi / n_major
        v = np.arange(n_minor) * 2 * np.pi / n_minor
        U, V = np.meshgrid(u, v)
        U, V = U.ravel(), V.ravel()
        radial = np.cos(U)[:, None] * e1 + np.sin(U)[:, None] * e2
        return self.center + (self.radius + self.tube * np.cos(V))[:, None] * radial + (self.tube * np.sin(V))[:, None] * self.axis


@dataclass
class TaskSpec:
    spots: np.ndarray
    dwell: np.ndarray
    start: np.ndarray
    goal: np.ndarray
    bounds: tuple[np.ndarray, np.ndarray]
    v_max: float = 4.0
    a_max: float = 6.0
    sensible_radius: float = 6.0

    def to_dict(self) -> dict:
        return {
            "spots": self.spots.tolist(),
            "dwell": self.dwell.tolist(),
            "start": self.start.tolist(),
            "goal": self.goal.tolist(),
            "bounds": [self.bounds[0].tolist(), self.bounds[1].tolist()],
            "v_max": self.v_max,
            "a_max": self.a_max,
            "sensible_radius": self.sensible_radius,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        spots = np.array(d["spots"], dtype=float).reshape(-1, 3)
        dwell = d.get("dwell", 1.0)
        dwell = np.full(len(spots), float(dwell)) if np.isscalar(dwell) else np.array(dwell, dtype=float)
        if len(dwell) != len(spots):
            raise ValueError("dwell list must match the spot count")
        start = np.array(d["start"], dtype=float)
        goal = np.array(d["goal"], dtype=float)
        if "bounds" in d:
            lo, hi = (np.array(b, dtype=float) for b in d["bounds"])
        else:
            pts = np.vstack([spots, start, goal])
            lo, hi = pts.min(axis=0) - 8.0, pts.max(axis=0) + 8.0
        return cls(spots, dwell, start, goal, (lo, hi), float(d.get("v_max", 4.0)), float(d.get("a_max", 6.0)),
                   float(d.get("sensible_radius", 6.0)))


@dataclass
class Scene:
    spec: SceneSpec
    pillars: list[Pillar]
    rings: list[Ring]
    points: np.ndarray
    task: TaskSpec

    def clearance(self, p) -> np.ndarray:
        p = np.atleast_2d(np.asarray(p, dtype=float))
        d = np.full(len(p), np.inf)
        for ob in (*self.pillars, *self.rings):
            d = np.minimum(d, ob.distance(p))
        return d


def generate_scene(spec: SceneSpec, max_tries: int = 20000) -> Scene:
    """Deterministic scene for ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    X, Y = spec.extent
    start = np.array([1.0, 1.0, 1.5])
    goal = np.array([X - 1.0, Y - 1.0, 1.5])
    keep_out = 2.5  # free room around start and goal
    pillars: list[Pillar] = []
    for _ in range(spec.pillar_count):
        for _ in range(max_tries):
            r = rng.uniform(*spec.pillar_radius)
            c = rng.uniform([r, r], [X - r, Y - r])
            h = rng.uniform(*spec.pillar_height)
            p = Pillar(c, float(r), float(h))
            if p.distance(np.vstack([start, goal])).min() > keep_out:
                pillars.append(p)
                break
    rings: list[Ring] = []
    for _ in range(spec.ring_count):
        for _ in range(max_tries):
            R = rng.uniform(*spec.ring_radius)
            c = np.array([rng.uniform(R, X - R), rng.uniform(R, Y - R), rng.uniform(R + 0.3, max(R + 0.3, SCENE_HEIGHT - R - 0.5))])
            a = rng.normal(size=3)
            a /= np.linalg.norm(a)
            ring = Ring(c, a, float(R), spec.ring_tube)
            if ring.distance(np.vstack([start, goal])).min() > keep_out:
                rings.append(ring)
                break
    obstacles = [*pillars, *rings]

    def clearance(p):
        d = np.full(len(p), np.inf)
        for ob in obstacles:
            d = np.minimum(d, ob.distance(p))
        return d

    spots: list[np.ndarray] = []
    margin = min(2.0, X / 4, Y / 4)
    for _ in range(spec.spot_count):
        for _ in range(max_tries):
            s = np.array([rng.uniform(margin, X - margin), rng.uniform(margin, Y - margin), rng.uniform(*spec.spot_height)])
            if obstacles and clearance(s[None, :])[0] < spec.spot_clearance:
                continue
            if any(np.linalg.norm(s - o) < spec.spot_separation for o in spots):
                continue
            spots.append(s)
            break
        else:
            raise ValueError(f"could not place {spec.spot_count} spots with the requested clearance")
    parts = [ob.surface(SURFACE_SPACING) for ob in obstacles]
    points = np.vstack(parts) if parts else np.zeros((0, 3))
    points = np.round(points, 6)
    bounds = (np.array([-1.0, -1.0, 0.0]), np.array([X + 1.0, Y + 1.0, SCENE_HEIGHT]))
    task = TaskSpec(np.array(spots).reshape(-1, 3), np.full(len(spots), spec.dwell), start, goal, bounds)
    return Scene(spec, pillars, rings, points, task)


def write_scene(scene: Scene, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_xyz(os.path.join(out_dir, "map.xyz"), scene.points)
    with open(os.path.join(out_dir, "task.json"), "w") as fh:
        json.dump(scene.task.to_dict(), fh, indent=1)
        fh.write("\n")
    meta = {"seed": scene.spec.seed, "spec": asdict(scene.spec), "points": int(len(scene.points)),
            "pillars": len(scene.pillars), "rings": len(scene.rings)}
    with open(os.path.join(out_dir, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=1)
        fh.write("\n")


def read_task(path) -> TaskSpec:
    with open(path) as fh:
        return TaskSpec.from_dict(json.load(fh))


# scoring ------------------------------------------------------------------------


@dataclass
class RunReport:
    status: str
    vis_capability: float = 0.0
    observed: list[bool] = field(default_factory=list)
    observed_time: list[float] = field(default_factory=list)
    traj_duration: float = 0.0
    jerk_integral: float = 0.0
    max_speed: float = 0.0
    max_acc: float = 0.0
    timings: dict = field(default_factory=dict)
    total_ms: float = 0.0
    error: dict | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        if not d["extra"]:
            d.pop("extra")
        return d

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


def longest_visible_run(
    times: np.ndarray, pos: np.ndarray, spot: np.ndarray, raw_map: PointCloudMap, radius: float,
    clearance: float, dt: float, need: float | None = None,
) -> float:
    """Longest contiguous stretch (samples x dt) seeing ``spot``; stops early once ``need`` is met."""
    near = np.linalg.norm(pos - spot, axis=1) <= radius
    best = run = 0
    for k in range(len(times)):
        if near[k] and raw_map.segment_clear(pos[k], spot, clearance):
            run += 1
            best = max(best, run)
            if need is not None and best * dt >= need - 1e-9:
                break
        else:
            run = 0
    return best * dt


def evaluate_run(
    traj: SplineTrajectory | tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    task: TaskSpec,
    raw_map: PointCloudMap,
    dt: float = 0.01,
    clearance: float = 0.15,
    radius: float | None = None,
) -> RunReport:
    """Score a trajectory with map-level oracles only.

    ``traj`` is a spline or pre-sampled (t, pos, vel, acc) arrays at spacing ``dt``.
    """
    radius = task.sensible_radius if radius is None else radius
    if isinstance(traj, SplineTrajectory):
        t, pos, vel, acc = traj.sample(dt)
        duration = traj.total_time
        jerk = traj.jerk_integral()
    else:
        t, pos, vel, acc = traj
        duration = float(t[-1] - t[0]) if len(t) else 0.0
        jerk = _sampled_jerk(t, acc)
    observed, seen = [], []
    for i, spot in enumerate(task.spots):
        run = longest_visible_run(t, pos, spot, raw_map, radius, clearance, dt, need=task.dwell[i])
        seen.append(run)
        observed.append(bool(run >= task.dwell[i] - 1e-9))
    n = len(task.spots)
    return RunReport(
        status="ok",
        vis_capability=(sum(observed) / n) if n else 1.0,
        observed=observed,
        observed_time=seen,
        traj_duration=duration,
        jerk_integral=jerk,
        max_speed=float(np.max(np.linalg.norm(vel, axis=1))) if len(vel) else 0.0,
        max_acc=float(np.max(np.linalg.norm(acc, axis=1))) if len(acc) else 0.0,
    )


def _sampled_jerk(t: np.ndarray, acc: np.ndarray) -> float:
    if len(t) < 3:
        return 0.0
    dtv = np.diff(t)
    jerk = np.diff(acc, axis=0) / dtv[:, None]
    return float(np.sum(np.sum(jerk * jerk, axis=1) * dtv))
