"""Geometric A* on the voxel grid and greedy line-of-sight shortcutting."""

from __future__ import annotations

import heapq
import itertools
import math
import weakref
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import UnreachableError
from .pointcloud import PointCloudMap, VoxelGrid

_OFFSETS = [
    (dx, dy, dz)
    for dx in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dz in (-1, 0, 1)
    if (dx, dy, dz) != (0, 0, 0)
]


@dataclass
class GridPath:
    waypoints: np.ndarray  # (n, 3); first/last are the exact query points

    @property
    def length(self) -> float:
        if len(self.waypoints) < 2:
            return 0.0
        return float(np.sum(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)))

    def __len__(self) -> int:
        return len(self.waypoints)


def dilate_grid(grid: VoxelGrid, cells: int = 1) -> VoxelGrid:
    """Grow occupancy by ``cells`` voxels in the 26-neighbourhood."""
    if cells <= 0:
        return grid
    occ = ndimage.binary_dilation(grid.occupancy, structure=np.ones((3, 3, 3), bool), iterations=cells)
    return VoxelGrid(grid.origin, grid.resolution, occ)


def snap_to_free(grid: VoxelGrid, p, max_cells: int = 2, accept=None):
    """Nearest free voxel index to ``p`` within ``max_cells`` voxels, or None.

    ``accept(center)`` can veto candidates, e.g. to require a clear segment
    from ``p`` to the voxel center.
    """
    p = np.asarray(p, dtype=float)
    idx = grid.world_to_index(p)
    if grid.in_bounds(idx) and not grid.occupancy[tuple(idx)]:
        if accept is None or accept(grid.index_to_world(idx)):
            return tuple(int(v) for v in idx)
    rng = range(-max_cells, max_cells + 1)
    cands = []
    for d in itertools.product(rng, rng, rng):
        cand = idx + np.array(d)
        if not grid.in_bounds(cand) or grid.occupancy[tuple(cand)]:
            continue
        dist = float(np.linalg.norm(grid.index_to_world(cand) - p))
        cands.append((dist, tuple(int(v) for v in cand)))
    for _, cand in sorted(cands):
        if accept is None or accept(grid.index_to_world(cand)):
            return cand
    return None


def find_path(grid: VoxelGrid, start, goal, max_expansions: int | None = None, snap_cells: int = 2,
              snap_accept=None) -> GridPath:
    """Shortest 26-connected voxel path between two points (A*, Euclidean heuristic)."""
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    s_idx = snap_to_free(grid, start, snap_cells, None if snap_accept is None else (lambda c: snap_accept(start, c)))
    g_idx = snap_to_free(grid, goal, snap_cells, None if snap_accept is None else (lambda c: snap_accept(goal, c)))
    if s_idx is None or g_idx is None:
        raise UnreachableError(
            f"no free voxel near {'start' if s_idx is None else 'goal'} of segment "
            f"{start.tolist()} -> {goal.tolist()}",
            start=start,
            goal=goal,
        )
    cells = _astar(grid, s_idx, g_idx, max_expansions)
    if cells is None:
        raise UnreachableError(
            f"no collision-free path from {start.tolist()} to {goal.tolist()}", start=start, goal=goal
        )
    # the exact endpoints stand in for their own voxels; snapped voxels stay
    lo = 0 if tuple(grid.world_to_index(start)) != s_idx else 1
    hi = len(cells) if tuple(grid.world_to_index(goal)) != g_idx else len(cells) - 1
    mid = cells[lo:hi] if hi > lo else (cells[:1] if lo == 0 or hi == len(cells) else [])
    pts = [start] + [grid.index_to_world(c) for c in mid] + [goal]
    return GridPath(_drop_repeats(np.array(pts)))


def _drop_repeats(pts: np.ndarray) -> np.ndarray:
    keep = [0]
    for k in range(1, len(pts)):
        if np.linalg.norm(pts[k] - pts[keep[-1]]) > 1e-12:
            keep.append(k)
    if len(keep) == 1 and len(pts) > 1:
        keep.append(len(pts) - 1)
    return pts[keep]


_BLOCKED_CACHE: "weakref.WeakKeyDictionary[VoxelGrid, list]" = weakref.WeakKeyDictionary()


def _padded_blocked(grid: VoxelGrid) -> list:
    cached = _BLOCKED_CACHE.get(grid)
    if cached is None:
        nx, ny, nz = grid.shape
        blocked = np.ones((nx + 2, ny + 2, nz + 2), dtype=bool)
        blocked[1:-1, 1:-1, 1:-1] = grid.occupancy
        cached = blocked.ravel().tolist()
        _BLOCKED_CACHE[grid] = cached
    return cached


def _astar(grid: VoxelGrid, s_idx, g_idx, max_expansions=None):
    nx, ny, nz = grid.shape
    # pad with an occupied border so neighbours never leave the array
    px, py, pz = nx + 2, ny + 2, nz + 2
    blocked = _padded_blocked(grid)
    res = grid.resolution
    steps = [(dx * py * pz + dy * pz + dz, res * math.sqrt(dx * dx + dy * dy + dz * dz)) for dx, dy, dz in _OFFSETS]

    def flat(c):
        return (c[0] + 1) * py * pz + (c[1] + 1) * pz + (c[2] + 1)

    s, g = flat(s_idx), flat(g_idx)
    gx, gy, gz = g_idx[0] + 1, g_idx[1] + 1, g_idx[2] + 1
    pyz = py * pz

    def heur(f):
        x, rem = divmod(f, pyz)
        y, z = divmod(rem, pz)
        return res * math.sqrt((x - gx) ** 2 + (y - gy) ** 2 + (z - gz) ** 2)

    gscore = {s: 0.0}
    parent = {s: -1}
    closed = set()
    h0 = heur(s)
    heap = [(h0, h0, 0, s)]
    counter = 1
    expansions = 0
    while heap:
        f, h, _, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if cur == g:
            out = []
            while cur != -1:
                x, rem = divmod(cur, pyz)
                y, z = divmod(rem, pz)
                out.append((x - 1, y - 1, z - 1))
                cur = parent[cur]
            return out[::-1]
        closed.add(cur)
        expansions += 1
        if max_expansions is not None and expansions > max_expansions:
            return None
        gc = gscore[cur]
        for off, w in steps:
            nb = cur + off
            if blocked[nb] or nb in closed:
                continue
            ng = gc + w
            if ng < gscore.get(nb, math.inf) - 1e-12:
                gscore[nb] = ng
                parent[nb] = cur
                hn = heur(nb)
                heapq.heappush(heap, (ng + hn, hn, counter, nb))
                counter += 1
    return None


def shortcut_path(cloud: PointCloudMap, path: GridPath, clearance: float) -> GridPath:
    """Greedy forward shortcutting: from each kept node jump to the farthest
    node reachable by a clear straight segment (consecutive nodes always kept)."""
    pts = path.waypoints
    if len(pts) <= 2:
        return GridPath(pts.copy())
    keep = [0]
    i = 0
    n = len(pts)
    while i < n - 1:
        j = i + 1
        while j + 1 < n and cloud.segment_clear(pts[i], pts[j + 1], clearance):
            j += 1
        keep.append(j)
        i = j
    return GridPath(pts[keep].copy())
