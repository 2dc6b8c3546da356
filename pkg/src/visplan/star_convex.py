"""Star convex polytopes of visible space.

Obstacle points around an inspection spot are pushed through the radial ball
flipping map d -> 2r - d, a convex hull is taken in the flipped frame, and the
visible region is everything whose flipped image lies outside that hull.
Flipped coordinates are always kept relative to the spot.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import HullError
from .pointcloud import PointCloudMap

EPS_CENTER = 1e-6
DEFAULT_AUGMENT = 256


@dataclass(frozen=True)
class FlipTransform:
    center: np.ndarray
    flip_radius: float
    bound_radius: float

    def __post_init__(self):
        if not (self.flip_radius > self.bound_radius > 0):
            raise ValueError("need flip_radius > bound_radius > 0")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))


def flip_point(t: FlipTransform, x) -> np.ndarray:
    """Center-relative flipped image ``(2r - d) u`` of ``x``.

    Inside the singular radius the image is pinned to ``(2r - eps) e_x``.
    """
    # shares the batch arithmetic so scalar and vectorised queries agree bit for bit
    return flip_points(t, x)[0]


def flip_points(t: FlipTransform, xs) -> np.ndarray:
    v = np.asarray(xs, dtype=float).reshape(-1, 3) - t.center
    d = np.linalg.norm(v, axis=1)
    out = np.empty_like(v)
    ok = d > EPS_CENTER
    out[ok] = ((2.0 * t.flip_radius - d[ok]) / d[ok])[:, None] * v[ok]
    out[~ok] = [2.0 * t.flip_radius - EPS_CENTER, 0.0, 0.0]
    return out


def unflip_points(t: FlipTransform, xhat) -> np.ndarray:
    """Inverse of the flip: flipped (center-relative) -> world coordinates."""
    xhat = np.asarray(xhat, dtype=float).reshape(-1, 3)
    m = np.linalg.norm(xhat, axis=1)
    return t.center + ((2.0 * t.flip_radius - m) / m)[:, None] * xhat


def fibonacci_sphere(n: int) -> np.ndarray:
    """``n`` near-uniform unit vectors (golden-angle spiral)."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    rho = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


@lru_cache(maxsize=16)
def _augment_inset(n: int) -> float:
    """Ratio between the innermost face distance and the vertex radius of the
    hull of ``n`` Fibonacci points on the unit sphere."""
    hull = ConvexHull(fibonacci_sphere(n))
    return float(np.min(-hull.equations[:, 3]))


@dataclass(frozen=True, eq=False)
class StarPolytope:
    center: np.ndarray
    transform: FlipTransform
    normals: np.ndarray  # (K, 3) unit outer normals of the flipped hull
    face_points: np.ndarray  # (K, 3) one vertex of each face
    offsets: np.ndarray  # (K,) b_k = n_k . a_k
    hull_vertices: np.ndarray  # flipped frame
    scp_vertices: np.ndarray  # world frame
    simplices: np.ndarray = field(repr=False)  # (K, 3) indices into hull_vertices
    local_count: int = 0
    # recently maximal faces; lets deep-inside points skip the full face scan
    hints: list = field(default_factory=list, repr=False)

    @property
    def face_count(self) -> int:
        return len(self.offsets)

    @property
    def bound_radius(self) -> float:
        return self.transform.bound_radius

    @property
    def flip_radius(self) -> float:
        return self.transform.flip_radius

    def face_distances(self, x) -> np.ndarray:
        """d_k = n_k . (x_hat - a_k) for one point."""
        return (flip_points(self.transform, x) @ self.normals.T - self.offsets)[0]

    def signed_distance(self, x) -> float:
        return float(np.max(self.face_distances(x)))

    def boundary_radius(self, direction) -> float:
        """World-frame distance from the center to the SCP boundary along ``direction``."""
        u = np.asarray(direction, dtype=float)
        u = u / np.linalg.norm(u)
        nu = self.normals @ u
        pos = nu > 1e-12
        h = float(np.min(self.offsets[pos] / nu[pos]))
        return 2.0 * self.flip_radius - h

    def contains(self, x) -> bool:
        return point_in_scp(self, x)


def build_scp(
    cloud: PointCloudMap,
    center,
    bound_radius: float = 6.0,
    flip_radius: float = 20.0,
    augment_count: int = DEFAULT_AUGMENT,
) -> StarPolytope:
    """Visible-space SCP around ``center`` from the map points inside the bound ball."""
    if augment_count < 32:
        raise ValueError("augment_count must be >= 32")
    t = FlipTransform(np.asarray(center, dtype=float), float(flip_radius), float(bound_radius))
    local = cloud.range_query(t.center, bound_radius) if not cloud.is_empty else np.empty((0, 3))
    if len(local):
        dl = np.linalg.norm(local - t.center, axis=1)
        local = local[dl > EPS_CENTER]
    # Augment points are placed so that the hull of the flipped sphere samples
    # encloses the flipped ball of radius 2r - R; membership then implies d < R.
    inner = 2.0 * flip_radius - bound_radius
    aug_radius = inner / _augment_inset(augment_count)
    aug_flipped = aug_radius * fibonacci_sphere(augment_count)
    pts = np.vstack([flip_points(t, local), aug_flipped]) if len(local) else aug_flipped
    joggled = False
    try:
        hull = ConvexHull(pts)
    except QhullError:
        try:
            hull = ConvexHull(pts, qhull_options="QJ")
            joggled = True
        except QhullError as exc:  # pragma: no cover - augment points make this unreachable
            raise HullError(f"convex hull failed at {t.center.tolist()}: {exc}") from exc
    eq = hull.equations
    normals = np.ascontiguousarray(eq[:, :3])
    offsets = -eq[:, 3]
    verts_idx = hull.vertices
    hull_vertices = pts[verts_idx]
    if joggled:
        offsets = np.maximum(offsets, np.max(normals @ hull_vertices.T, axis=1))
    remap = np.full(len(pts), -1, dtype=np.intp)
    remap[verts_idx] = np.arange(len(verts_idx))
    simplices = remap[hull.simplices]
    face_points = hull_vertices[simplices[:, 0]]
    offsets = np.einsum("ij,ij->i", normals, face_points) if not joggled else offsets
    scp_vertices = unflip_points(t, hull_vertices)
    return StarPolytope(
        center=t.center,
        transform=t,
        normals=normals,
        face_points=face_points,
        offsets=np.ascontiguousarray(offsets),
        hull_vertices=hull_vertices,
        scp_vertices=scp_vertices,
        simplices=simplices,
        local_count=len(local),
    )


def point_in_scp(scp: StarPolytope, x) -> bool:
    """Visible iff the flipped point is strictly outside the flipped hull."""
    v = np.asarray(x, dtype=float) - scp.center
    if np.linalg.norm(v) <= EPS_CENTER:
        return True
    return bool(np.any(flip_points(scp.transform, x) @ scp.normals.T > scp.offsets))


def points_in_scp(scp: StarPolytope, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=float).reshape(-1, 3)
    xhat = flip_points(scp.transform, xs)
    inside = np.any(xhat @ scp.normals.T > scp.offsets, axis=1)
    near = np.linalg.norm(xs - scp.center, axis=1) <= EPS_CENTER
    return inside | near


def lse(values: np.ndarray, alpha: float, axis: int = -1) -> np.ndarray:
    """(1/alpha) log sum exp(alpha * v), shifted by the max for stability."""
    m = np.max(values, axis=axis, keepdims=True)
    s = np.sum(np.exp(alpha * (values - m)), axis=axis, keepdims=True)
    return np.squeeze(m + np.log(s) / alpha, axis=axis)


def lse_distance(scp: StarPolytope, x, alpha: float) -> float:
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return float(lse(scp.face_distances(x), alpha))


def flip_jacobian(t: FlipTransform, x) -> np.ndarray:
    """d x_hat / d x, symmetric: (2r/d - 1)(I - u u^T) - u u^T."""
    v = np.asarray(x, dtype=float) - t.center
    d = np.linalg.norm(v)
    u = v / d
    uu = np.outer(u, u)
    return (2.0 * t.flip_radius / d - 1.0) * (np.eye(3) - uu) - uu


def visibility_violation(scp: StarPolytope, x, d_min: float, alpha: float, lam: float):
    """Cubic penalty lam * max(d_min - LSE, 0)^3 and its gradient w.r.t. ``x``."""
    values, grads = visibility_violation_batch(scp, np.asarray(x, dtype=float)[None, :], d_min, alpha, lam)
    return float(values[0]), grads[0]


def visibility_violation_batch(scp: StarPolytope, xs, d_min: float, alpha: float, lam: float):
    """Vectorised penalty over many points; returns (values (n,), grads (n, 3))."""
    xs = np.asarray(xs, dtype=float).reshape(-1, 3)
    n = len(xs)
    values = np.zeros(n)
    grads = np.zeros((n, 3))
    v = xs - scp.center
    d = np.linalg.norm(v, axis=1)
    ok = d > EPS_CENTER
    if not np.any(ok):
        return values, grads
    v, d = v[ok], d[ok]
    u = v / d[:, None]
    r2 = 2.0 * scp.flip_radius
    xhat = ((r2 - d) / d)[:, None] * v
    if scp.hints:
        # LSE >= max_k d_k, so one face at distance >= d_min already zeroes the penalty
        h = np.array(scp.hints, dtype=np.intp)
        deep = np.max(xhat @ scp.normals[h].T - scp.offsets[h], axis=1) >= d_min
        if np.all(deep):
            return values, grads
        keep = ~deep
        ok_idx = np.nonzero(ok)[0][keep]
        ok = np.zeros(n, dtype=bool)
        ok[ok_idx] = True
        v, d, u, xhat = v[keep], d[keep], u[keep], xhat[keep]
    dist = xhat @ scp.normals.T - scp.offsets  # (n, K)
    _remember(scp, np.argmax(dist, axis=1))
    m = np.max(dist, axis=1, keepdims=True)
    w = np.exp(alpha * (dist - m))
    s = np.sum(w, axis=1)
    lse_val = m[:, 0] + np.log(s) / alpha
    viol = d_min - lse_val
    act = viol > 0
    if not np.any(act):
        return values, grads
    val = np.where(act, lam * np.maximum(viol, 0.0) ** 3, 0.0)
    # gradient of LSE in the flipped frame: softmax-weighted normals
    gh = (w @ scp.normals) / s[:, None]
    # J^T gh with J = (2r/d - 1)(I - uu^T) - uu^T
    ug = np.sum(u * gh, axis=1)
    jg = (r2 / d - 1.0)[:, None] * (gh - ug[:, None] * u) - ug[:, None] * u
    g = -(3.0 * lam * np.maximum(viol, 0.0) ** 2)[:, None] * jg
    values[ok] = val
    grads[ok] = g
    return values, grads


def _remember(scp: StarPolytope, faces: np.ndarray, keep: int = 32) -> None:
    merged = list(dict.fromkeys([int(f) for f in faces[::-1]] + scp.hints))
    scp.hints[:] = merged[:keep]


def lse_values(scp: StarPolytope, xs, alpha: float) -> np.ndarray:
    xhat = flip_points(scp.transform, xs)
    return lse(xhat @ scp.normals.T - scp.offsets, alpha, axis=1)


# mesh export -------------------------------------------------------------------


def export_scp_mesh(scp: StarPolytope, path) -> None:
    """Write the SCP surface (inverted hull) as an ASCII OBJ triangle mesh."""
    if not path:
        raise ValueError("empty mesh path")
    verts = scp.scp_vertices
    faces = scp.simplices.copy()
    # orient triangles so their normals point away from the spot
    a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    nrm = np.cross(b - a, c - a)
    outward = np.einsum("ij,ij->i", nrm, (a + b + c) / 3.0 - scp.center) >= 0
    faces[~outward] = faces[~outward][:, [0, 2, 1]]
    try:
        with open(path, "w") as fh:
            cx, cy, cz = (float(v) for v in scp.center)
            fh.write(f"# star convex polytope, center {cx!r} {cy!r} {cz!r}\n")
            for x, y, z in verts.tolist():
                fh.write(f"v {x!r} {y!r} {z!r}\n")
            for i, j, k in faces:
                fh.write(f"f {i + 1} {j + 1} {k + 1}\n")
    except OSError as exc:
        raise OSError(f"cannot write mesh {path}: {exc}") from exc


def load_obj(path) -> tuple[np.ndarray, np.ndarray]:
    verts, faces = [], []
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(p) for p in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    return np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=int).reshape(-1, 3)
