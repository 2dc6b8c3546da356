"""Obstacle point cloud map: loading, cubic inflation, range/visibility queries
and the derived voxel occupancy grid."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyMapError, MapParseError, ResourceError

MAX_VOXELS = 64_000_000

# the eight (+-1, +-1, +-1) corner directions of the inflation cube
CUBE_CORNERS = np.array(
    [[sx, sy, sz] for sx in (-1.0, 1.0) for sy in (-1.0, 1.0) for sz in (-1.0, 1.0)]
)


def inflate_points(points: np.ndarray, offset: float) -> np.ndarray:
    """Replace every point by the 8 corners of the cube of half-width ``offset``."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if offset <= 0.0 or len(points) == 0:
        return points.copy()
    return (points[:, None, :] + offset * CUBE_CORNERS[None, :, :]).reshape(-1, 3)


@dataclass(frozen=True, eq=False)
class PointCloudMap:
    """Immutable obstacle map.

    ``points`` are the inflated obstacle points that every query works on;
    ``raw_points`` keeps the cloud as it was loaded.
    """

    points: np.ndarray
    raw_points: np.ndarray
    inflation_offset: float
    bounds: tuple[np.ndarray, np.ndarray]
    kd_index: cKDTree | None = field(repr=False)

    @classmethod
    def from_points(cls, raw_points, inflation_offset: float = 0.0, bounds=None) -> "PointCloudMap":
        if inflation_offset < 0:
            raise ValueError("inflation_offset must be >= 0")
        raw = np.ascontiguousarray(np.asarray(raw_points, dtype=float).reshape(-1, 3))
        pts = inflate_points(raw, inflation_offset)
        pts.setflags(write=False)
        raw.setflags(write=False)
        if bounds is None:
            if len(pts):
                bounds = (pts.min(axis=0), pts.max(axis=0))
            else:
                bounds = (np.zeros(3), np.zeros(3))
        lo = np.asarray(bounds[0], dtype=float)
        hi = np.asarray(bounds[1], dtype=float)
        if len(pts) and (np.any(pts < lo - 1e-12) or np.any(pts > hi + 1e-12)):
            raise ValueError("points fall outside the given bounds")
        tree = cKDTree(pts) if len(pts) else None
        return cls(pts, raw, float(inflation_offset), (lo, hi), tree)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def is_empty(self) -> bool:
        return len(self.points) == 0

    # queries ---------------------------------------------------------------

    def range_query(self, center, radius: float) -> np.ndarray:
        """Points with ``|p - center| <= radius`` (boundary inclusive)."""
        if radius <= 0:
            raise ValueError("radius must be positive")
        if self.kd_index is None:
            return np.empty((0, 3))
        center = np.asarray(center, dtype=float)
        # pad the tree query slightly and apply the exact inclusive test ourselves
        idx = self.kd_index.query_ball_point(center, radius * (1.0 + 1e-9) + 1e-12)
        idx = np.sort(np.asarray(idx, dtype=np.intp))
        cand = self.points[idx]
        d2 = np.sum((cand - center) ** 2, axis=1)
        return cand[d2 <= radius * radius]

    def nearest_distance(self, x) -> float:
        if self.kd_index is None:
            return float("inf")
        d, _ = self.kd_index.query(np.asarray(x, dtype=float))
        return float(d)

    def segment_clear(self, a, b, clearance: float) -> bool:
        """True iff no map point lies within ``clearance`` of segment [a, b]."""
        if clearance <= 0:
            raise ValueError("clearance must be positive")
        if self.kd_index is None:
            return True
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        length = float(np.linalg.norm(b - a))
        chunk = max(4.0 * clearance, 0.5)
        n = max(1, int(np.ceil(length / chunk)))
        s = (np.arange(n) + 0.5) / n
        centers = a + s[:, None] * (b - a)
        reach = 0.5 * length / n + clearance
        hits = self.kd_index.query_ball_point(centers, reach * (1.0 + 1e-9))
        idx = np.unique(np.concatenate([np.asarray(h, dtype=np.intp) for h in hits]))
        if len(idx) == 0:
            return True
        return bool(np.all(point_segment_distance(self.points[idx], a, b) > clearance))


def point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    ap = points - a
    if denom == 0.0:
        return np.linalg.norm(ap, axis=1)
    t = np.clip(ap @ ab / denom, 0.0, 1.0)
    return np.linalg.norm(ap - t[:, None] * ab, axis=1)


# file formats ----------------------------------------------------------------


def read_xyz(path) -> np.ndarray:
    rows = []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 3:
                raise MapParseError(f"expected 3 values, got {len(parts)}", line=lineno)
            try:
                rows.append((float(parts[0]), float(parts[1]), float(parts[2])))
            except ValueError:
                raise MapParseError(f"non-numeric value in {text!r}", line=lineno) from None
            if not all(np.isfinite(rows[-1])):
                raise MapParseError("non-finite coordinate", line=lineno)
    return np.array(rows, dtype=float).reshape(-1, 3)


def write_xyz(path, points) -> None:
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    with open(path, "w") as fh:
        for x, y, z in points:
            fh.write(f"{x:.6f} {y:.6f} {z:.6f}\n")


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def read_ply(path) -> np.ndarray:
    """Vertex positions from an ASCII or binary PLY file (other elements ignored)."""
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise MapParseError("missing PLY header", line=1)
    header_end = data.index(b"\n", end) + 1
    header = data[:header_end].decode("ascii", errors="replace").splitlines()
    fmt = None
    elements: list[tuple[str, int, list[tuple[str, str]]]] = []
    for lineno, line in enumerate(header, start=1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise MapParseError("property before element", line=lineno)
            if parts[1] == "list":
                elements[-1][2].append((parts[-1], "list"))
            else:
                if parts[1] not in _PLY_TYPES:
                    raise MapParseError(f"unknown property type {parts[1]}", line=lineno)
                elements[-1][2].append((parts[2], parts[1]))
    if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
        raise MapParseError(f"unsupported PLY format {fmt}", line=2)
    if not elements or elements[0][0] != "vertex":
        raise MapParseError("first PLY element must be 'vertex'", line=len(header))
    _, count, props = elements[0]
    names = [p[0] for p in props]
    if any(t == "list" for _, t in props) or not {"x", "y", "z"} <= set(names):
        raise MapParseError("vertex element needs scalar x, y, z properties", line=len(header))
    body = data[header_end:]
    if fmt == "ascii":
        lines = body.decode("ascii", errors="replace").splitlines()
        out = np.empty((count, 3))
        cols = [names.index(k) for k in ("x", "y", "z")]
        for i in range(count):
            lineno = len(header) + i + 1
            if i >= len(lines):
                raise MapParseError("truncated vertex list", line=lineno)
            parts = lines[i].split()
            if len(parts) < len(names):
                raise MapParseError("too few vertex values", line=lineno)
            try:
                out[i] = [float(parts[c]) for c in cols]
            except ValueError:
                raise MapParseError("non-numeric vertex value", line=lineno) from None
        return out
    order = "<" if fmt == "binary_little_endian" else ">"
    dtype = np.dtype([(n, order + _PLY_TYPES[t]) for n, t in props])
    if len(body) < count * dtype.itemsize:
        raise MapParseError("truncated binary vertex data", line=len(header))
    arr = np.frombuffer(body, dtype=dtype, count=count)
    return np.stack([arr["x"], arr["y"], arr["z"]], axis=1).astype(float)


def write_ply(path, points, binary: bool = True) -> None:
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    fmt = "binary_little_endian" if binary else "ascii"
    ptype = "double" if binary else "float"
    header = (
        f"ply\nformat {fmt} 1.0\nelement vertex {len(points)}\n"
        f"property {ptype} x\nproperty {ptype} y\nproperty {ptype} z\nend_header\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            fh.write(np.ascontiguousarray(points, dtype="<f8").tobytes())
        else:
            for x, y, z in points:
                fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n".encode("ascii"))


def load_map(source, inflation_offset: float = 0.3, allow_empty: bool = False) -> PointCloudMap:
    """Read ``.xyz`` or ``.ply`` and return the inflated, indexed map."""
    if inflation_offset < 0:
        raise ValueError("inflation_offset must be >= 0")
    ext = os.path.splitext(str(source))[1].lower()
    raw = read_ply(source) if ext == ".ply" else read_xyz(source)
    if len(raw) == 0 and not allow_empty:
        raise EmptyMapError(f"{source}: point cloud is empty")
    return PointCloudMap.from_points(raw, inflation_offset)


# voxel grid --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    origin: np.ndarray
    resolution: float
    occupancy: np.ndarray  # bool, shape (nx, ny, nz)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.occupancy.shape)

    def world_to_index(self, p) -> np.ndarray:
        idx = np.floor((np.asarray(p, dtype=float) - self.origin) / self.resolution).astype(int)
        return idx

    def index_to_world(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.resolution

    def in_bounds(self, idx) -> bool:
        idx = np.asarray(idx)
        return bool(np.all(idx >= 0) and np.all(idx < np.array(self.shape)))

    def occupied(self, idx) -> bool:
        return not self.in_bounds(idx) or bool(self.occupancy[tuple(idx)])


def build_voxel_grid(cloud: PointCloudMap, resolution: float, bounds=None, max_cells: int = MAX_VOXELS) -> VoxelGrid:
    """Occupancy grid over ``bounds`` (default: map bounds): a voxel is occupied
    iff at least one inflated point falls inside it."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    lo, hi = (cloud.bounds if bounds is None else bounds)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    dims = np.maximum(np.ceil((hi - lo) / resolution).astype(np.int64), 1)
    # a point sitting exactly on the upper face still needs a voxel
    dims = np.where(lo + dims * resolution <= hi, dims + 1, dims)
    ncell = int(np.prod(dims))
    if ncell > max_cells:
        raise ResourceError(f"voxel grid of {tuple(dims)} = {ncell} cells exceeds cap {max_cells}")
    occ = np.zeros(tuple(int(d) for d in dims), dtype=bool)
    if len(cloud.points):
        idx = np.floor((cloud.points - lo) / resolution).astype(np.int64)
        keep = np.all((idx >= 0) & (idx < dims), axis=1)
        idx = idx[keep]
        occ[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    return VoxelGrid(lo, float(resolution), occ)
