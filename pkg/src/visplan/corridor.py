"""Convex polytopes on the point cloud and the safe-and-visible corridor that
chains them with the SCPs along the searched path."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import HalfspaceIntersection, QhullError

from .errors import CorridorError, SeedCollisionError
from .path_search import GridPath
from .pointcloud import PointCloudMap
from .star_convex import StarPolytope, lse_values, points_in_scp

_CUBE_NORMALS = np.vstack([np.eye(3), -np.eye(3)])


@dataclass(frozen=True, eq=False)
class ConvexPolytope:
    normals: np.ndarray  # (K, 3) unit
    offsets: np.ndarray  # (K,) region is {x : n . x <= b}
    seed: np.ndarray
    vertices: np.ndarray = field(repr=False)

    def margins(self, xs) -> np.ndarray:
        """min_k (b_k - n_k . x) per point; positive means strictly inside."""
        xs = np.asarray(xs, dtype=float).reshape(-1, 3)
        return np.min(self.offsets[None, :] - xs @ self.normals.T, axis=1)

    def contains(self, x, margin: float = 0.0) -> bool:
        return bool(self.margins(x)[0] > margin)

    def contains_many(self, xs, margin: float = 0.0) -> np.ndarray:
        return self.margins(xs) > margin

    def to_dict(self) -> dict:
        return {
            "normals": self.normals.tolist(),
            "offsets": self.offsets.tolist(),
            "seed": self.seed.tolist(),
            "vertices": self.vertices.tolist(),
        }


def polytope_vertices(normals: np.ndarray, offsets: np.ndarray, interior: np.ndarray):
    """Vertices of {n.x <= b} and the indices of the halfspaces touching it."""
    hs = np.hstack([normals, -offsets[:, None]])
    inter = HalfspaceIntersection(hs, interior)
    verts = inter.intersections
    active = sorted({int(i) for facet in inter.dual_facets for i in facet})
    return verts, np.array(active, dtype=np.intp)


def generate_polytope(cloud: PointCloudMap, seed, gen_radius: float = 3.0, d_min: float = 0.1) -> ConvexPolytope:
    """Obstacle-free convex polytope around ``seed``.

    Starts from the cube of half-width ``gen_radius`` and, while a map point
    is still strictly inside, cuts with the plane through the nearest such
    point (normal along point - seed), shifted toward the seed by ``d_min``.
    """
    seed = np.asarray(seed, dtype=float)
    if cloud.nearest_distance(seed) <= d_min:
        raise SeedCollisionError(f"seed {seed.tolist()} is within {d_min} m of an obstacle")
    normals = [n for n in _CUBE_NORMALS]
    offsets = [float(n @ seed) + gen_radius for n in _CUBE_NORMALS]
    if not cloud.is_empty:
        local = cloud.range_query(seed, gen_radius * np.sqrt(3.0))
        A = np.array(normals)
        b = np.array(offsets)
        cand = local[np.all(local @ A.T < b, axis=1)] if len(local) else local
        while len(cand):
            d = np.linalg.norm(cand - seed, axis=1)
            k = int(np.argmin(d))
            n = (cand[k] - seed) / d[k]
            off = float(n @ cand[k]) - d_min
            normals.append(n)
            offsets.append(off)
            cand = cand[cand @ n < off]
    normals = np.array(normals)
    offsets = np.array(offsets)
    verts, active = polytope_vertices(normals, offsets, seed)
    return ConvexPolytope(np.ascontiguousarray(normals[active]), offsets[active].copy(), seed, verts)


# path walking -------------------------------------------------------------------


def _segment_exit(poly: ConvexPolytope, a: np.ndarray, b: np.ndarray) -> float | None:
    """Parameter in (0, 1] where a -> b leaves ``poly`` (a inside), or None if b is inside."""
    d = b - a
    nd = poly.normals @ d
    slack = poly.offsets - poly.normals @ a
    out = nd > 0
    if not np.any(out):
        return None
    t = np.min(slack[out] / nd[out])
    if t >= 1.0:
        return None
    return max(float(t), 0.0)


def path_polytope_exit(poly: ConvexPolytope, path: GridPath, enter_index: int = 0):
    """Last point of the path (from ``enter_index``) inside ``poly``.

    Returns (point, segment index); the index is -1 when the whole remaining
    path stays inside, in which case the final path point is returned.
    """
    pts = path.waypoints
    for k in range(enter_index, len(pts) - 1):
        t = _segment_exit(poly, pts[k], pts[k + 1])
        if t is not None:
            return pts[k] + t * (pts[k + 1] - pts[k]), k
    return pts[-1].copy(), -1


@dataclass
class CorridorElement:
    kind: str  # "scp" | "poly"
    poly: ConvexPolytope | None = None
    scp_index: int | None = None
    dwell: float = 0.0


@dataclass
class Corridor:
    elements: list[CorridorElement]
    junctions: list[np.ndarray]
    scps: list[StarPolytope] = field(repr=False, default_factory=list)
    legs: list[tuple[int, int]] = field(default_factory=list)  # element range per leg
    anchors: list[np.ndarray] = field(default_factory=list)  # deepest path point of each overlap

    def __len__(self) -> int:
        return len(self.elements)

    def contains(self, j: int, x) -> bool:
        el = self.elements[j]
        if el.kind == "poly":
            return el.poly.contains(x)
        return bool(points_in_scp(self.scps[el.scp_index], x)[0])

    def contains_many(self, j: int, xs) -> np.ndarray:
        el = self.elements[j]
        if el.kind == "poly":
            return el.poly.contains_many(xs)
        return points_in_scp(self.scps[el.scp_index], xs)

    @property
    def polytopes(self) -> list[ConvexPolytope]:
        return [e.poly for e in self.elements if e.kind == "poly"]

    def to_dict(self) -> dict:
        els = []
        for e in self.elements:
            if e.kind == "poly":
                els.append({"type": "poly", "dwell": 0.0, "halfspaces": {
                    "normals": e.poly.normals.tolist(), "offsets": e.poly.offsets.tolist()},
                    "seed": e.poly.seed.tolist(), "vertices": e.poly.vertices.tolist()})
            else:
                els.append({"type": "scp", "scp": int(e.scp_index), "dwell": float(e.dwell),
                            "center": self.scps[e.scp_index].center.tolist()})
        return {"elements": els, "junctions": [j.tolist() for j in self.junctions]}

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


class _PathCursor:
    """Arc-length parametrisation of a polyline."""

    def __init__(self, pts: np.ndarray):
        self.pts = pts
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1) if len(pts) > 1 else np.zeros(0)
        self.cum = np.concatenate([[0.0], np.cumsum(seg)])
        self.length = float(self.cum[-1])

    def at(self, s):
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.length)
        k = np.clip(np.searchsorted(self.cum, s, side="right") - 1, 0, max(len(self.pts) - 2, 0))
        if len(self.pts) == 1:
            return np.broadcast_to(self.pts[0], s.shape + (3,)).copy()
        seg = self.cum[k + 1] - self.cum[k]
        t = np.where(seg > 0, (s - self.cum[k]) / np.where(seg > 0, seg, 1.0), 0.0)
        return self.pts[k] + t[..., None] * (self.pts[k + 1] - self.pts[k])

    def samples(self, s0: float, s1: float, step: float) -> np.ndarray:
        n = max(1, int(np.ceil((s1 - s0) / step)))
        return np.linspace(s0, s1, n + 1)

    def poly_exit(self, poly: ConvexPolytope, s0: float) -> float:
        """Arc length where the path leaves ``poly`` after ``s0`` (length if never)."""
        k = int(np.clip(np.searchsorted(self.cum, s0, side="right") - 1, 0, max(len(self.pts) - 2, 0)))
        a = self.at(s0)
        for j in range(k, len(self.pts) - 1):
            b = self.pts[j + 1]
            t = _segment_exit(poly, a, b)
            if t is not None:
                return float(self.cum[j] + np.linalg.norm(a - self.pts[j]) + t * np.linalg.norm(b - a))
            a = b
        return self.length


def _scp_entry(cursor: _PathCursor, scp: StarPolytope, step: float) -> float:
    """Start of the final contiguous stretch of the path inside ``scp``."""
    s = cursor.samples(0.0, cursor.length, step)
    inside = points_in_scp(scp, cursor.at(s))
    if not inside[-1]:
        return cursor.length
    out = np.nonzero(~inside)[0]
    if len(out) == 0:
        return 0.0
    lo, hi = s[out[-1]], s[out[-1] + 1]
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if points_in_scp(scp, cursor.at(mid)[None, :])[0]:
            hi = mid
        else:
            lo = mid
    return hi


def _scp_exit(cursor: _PathCursor, scp: StarPolytope, s0: float, step: float) -> float:
    """Last arc length of the contiguous stretch inside ``scp`` starting at ``s0``."""
    s = cursor.samples(s0, cursor.length, step)
    inside = points_in_scp(scp, cursor.at(s))
    out = np.nonzero(~inside)[0]
    if len(out) == 0:
        return cursor.length
    if out[0] == 0:
        return s0
    lo, hi = s[out[0] - 1], s[out[0]]
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if points_in_scp(scp, cursor.at(mid)[None, :])[0]:
            lo = mid
        else:
            hi = mid
    return lo


def build_corridor(
    cloud: PointCloudMap,
    scps: list[StarPolytope],
    route: np.ndarray,
    paths: list[GridPath],
    dwell: list[float] | float = 1.0,
    gen_radius: float = 3.0,
    d_min: float = 0.1,
    alpha: float = 100.0,
    max_polys_per_leg: int = 64,
    step: float = 0.05,
) -> Corridor:
    """Chain SCPs and overlapping convex polytopes along the per-leg paths.

    ``route`` is (start, w_1, ..., w_N, goal); ``paths[l]`` connects
    route[l] to route[l + 1].
    """
    n = len(scps)
    route = np.asarray(route, dtype=float)
    if len(paths) != n + 1 or len(route) != n + 2:
        raise ValueError("need N + 1 paths for N SCPs")
    dwell = [float(dwell)] * n if np.isscalar(dwell) else [float(v) for v in dwell]
    elements: list[CorridorElement] = []
    junctions: list[np.ndarray] = []
    anchors: list[np.ndarray] = []
    legs = []

    def member(el):
        if el.kind == "poly":
            return el.poly.contains_many
        return lambda xs, sc=scps[el.scp_index]: points_in_scp(sc, xs)

    def depth(el):
        if el.kind == "poly":
            return lambda xs: el.poly.margins(xs) - d_min
        return lambda xs, sc=scps[el.scp_index]: lse_values(sc, xs, alpha) - d_min

    def anchor(a, b, cursor, s_lo, s_hi, fallback):
        ss = cursor.samples(s_lo, max(s_lo, s_hi), step)
        xs = cursor.at(ss)
        score = np.minimum(depth(a)(xs), depth(b)(xs))
        score[~(member(a)(xs) & member(b)(xs))] = -np.inf
        k = int(np.argmax(score))
        return xs[k].copy() if np.isfinite(score[k]) else np.asarray(fallback, dtype=float).copy()

    def new_poly(seed, leg, cursor, s_seed, s_floor):
        # back the seed off along the path if it sits too close to an obstacle
        s_try = s_seed
        for _ in range(12):
            x = cursor.at(s_try)
            if cloud.nearest_distance(x) > d_min * 1.05:
                return generate_polytope(cloud, x, gen_radius, d_min), s_try
            s_try = max(s_floor, s_try - 0.05)
        raise CorridorError(f"no collision-free polytope seed near {np.asarray(seed).tolist()}", leg=leg)

    def witness_between(prev_ok, next_ok, cursor, s_lo, s_hi):
        """A path point in [s_lo, s_hi] passing both membership tests, preferring s_hi."""
        for back in (0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2):
            s = max(s_lo, s_hi - back)
            x = cursor.at(s)
            if prev_ok(x) and next_ok(x):
                return x, s
        cands = cursor.samples(s_lo, s_hi, step / 4)
        for s in cands[::-1]:
            x = cursor.at(s)
            if prev_ok(x) and next_ok(x):
                return x, float(s)
        return None, None

    for leg in range(n + 1):
        cursor = _PathCursor(paths[leg].waypoints)
        first_el = len(elements)
        target = scps[leg] if leg < n else None
        s_entry = _scp_entry(cursor, target, step) if target is not None else None
        if leg == 0:
            if s_entry is not None and s_entry <= 0.0:
                # the whole first leg already lies in the first SCP
                elements.append(CorridorElement("scp", scp_index=0, dwell=dwell[0]))
                legs.append((first_el, len(elements)))
                continue
            poly = generate_polytope(cloud, route[0], gen_radius, d_min)
            elements.append(CorridorElement("poly", poly=poly))
        s_cur = 0.0
        count = 0
        while True:
            cur = elements[-1]
            if cur.kind == "poly":
                s_exit = cursor.poly_exit(cur.poly, s_cur)
                cur_ok = cur.poly.contains
            else:
                s_exit = _scp_exit(cursor, scps[cur.scp_index], s_cur, step)
                sc = scps[cur.scp_index]
                cur_ok = lambda x, sc=sc: bool(points_in_scp(sc, x)[0])  # noqa: E731
            if target is None:
                if s_exit >= cursor.length:
                    break
            elif s_exit >= s_entry:
                # junction into the target SCP, deep inside if possible
                lo = max(s_entry, s_cur)
                ss = cursor.samples(lo, min(s_exit, cursor.length), step)
                xs = cursor.at(ss)
                deep = lse_values(target, xs, alpha) >= 0.5 * d_min
                deep &= points_in_scp(target, xs)
                x_j = None
                for s_c, ok in zip(ss, deep):
                    if ok and cur_ok(cursor.at(s_c)):
                        x_j = cursor.at(s_c)
                        break
                if x_j is None:
                    x_j, _ = witness_between(
                        cur_ok, lambda x: bool(points_in_scp(target, x)[0]), cursor, lo, min(s_exit, cursor.length)
                    )
                if x_j is not None:
                    junctions.append(x_j)
                    elements.append(CorridorElement("scp", scp_index=leg, dwell=dwell[leg]))
                    anchors.append(anchor(cur, elements[-1], cursor, lo, min(s_exit, cursor.length), x_j))
                    break
            if s_exit >= cursor.length and cur.kind == "scp" and target is None:
                break
            count += 1
            if count > max_polys_per_leg:
                raise CorridorError(f"leg {leg}: more than {max_polys_per_leg} polytopes", leg=leg)
            # next polytope at the exit point
            poly, s_seed = new_poly(cursor.at(s_exit), leg, cursor, s_exit, s_cur)
            x_w, s_w = witness_between(cur_ok, poly.contains, cursor, s_cur, s_seed)
            if x_w is None:
                x_w = poly.seed if cur_ok(poly.seed) else None
                s_w = s_seed
            if x_w is None:
                raise CorridorError(f"leg {leg}: consecutive elements do not overlap at s={s_exit:.3f}", leg=leg)
            junctions.append(x_w)
            elements.append(CorridorElement("poly", poly=poly))
            anchors.append(anchor(cur, elements[-1], cursor, max(s_cur, s_seed - gen_radius),
                                  min(cursor.length, s_seed + gen_radius), x_w))
            s_cur = max(s_seed, s_w)
            if s_cur <= 0 and s_exit <= 0 and count > 1:
                raise CorridorError(f"leg {leg}: corridor makes no progress", leg=leg)
        legs.append((first_el, len(elements)))
    corridor = Corridor(elements, junctions, scps, legs, anchors)
    return corridor


def check_corridor(corridor: Corridor, cloud: PointCloudMap) -> list[str]:
    """Safety and connectivity problems of a built corridor (empty when sound)."""
    problems = []
    for j, el in enumerate(corridor.elements):
        if el.kind == "poly" and len(cloud.points):
            inner = el.poly.contains_many(cloud.points, 0.0)
            if np.any(inner):
                problems.append(f"polytope {j}: {int(np.sum(inner))} map points strictly inside")
    for j, x in enumerate(corridor.junctions):
        if not (corridor.contains(j, x) and corridor.contains(j + 1, x)):
            problems.append(f"junction {j}: witness fails membership")
    return problems
