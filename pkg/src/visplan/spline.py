"""Minimum-jerk piecewise quintic splines.

A spline with M pieces is fixed by its M - 1 interior points, the piece
durations and the start/end states (position, velocity, acceleration). The
coefficients solve a sparse linear system: three start rows, six rows per
interior joint (pass through the point, continuity of derivatives 0..4) and
three end rows. The same factorisation gives the adjoint solve used to pull
cost gradients back onto the points and durations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import splu

from .errors import SplineError, TrajectoryParseError

DEG = 5
NCOEF = DEG + 1
# falling-factorial multipliers: _FF[k, j] = j! / (j - k)! for j >= k
_FF = np.array([[factorial(j) / factorial(j - k) if j >= k else 0.0 for j in range(NCOEF)] for k in range(NCOEF)])
_POW = np.array([[max(j - k, 0) for j in range(NCOEF)] for k in range(NCOEF)])


def basis(t, order: int = 0) -> np.ndarray:
    """Row vector(s) d^order/dt^order [1, t, ..., t^5]; ``t`` scalar or array."""
    t = np.asarray(t, dtype=float)
    out = _FF[order] * np.power(t[..., None], _POW[order])
    out[..., : order] = 0.0
    return out


def jerk_cost(coeffs: np.ndarray, durations: np.ndarray):
    """Closed-form sum of the squared-jerk integrals of every piece.

    Returns (value, d/dcoeffs (M, 6, 3), d/ddurations (M,)).
    """
    c3, c4, c5 = coeffs[:, 3], coeffs[:, 4], coeffs[:, 5]
    T = durations[:, None]
    T2, T3, T4, T5 = T * T, T**3, T**4, T**5
    per = (
        36 * c3 * c3 * T + 144 * c3 * c4 * T2 + (192 * c4 * c4 + 240 * c3 * c5) * T3
        + 720 * c4 * c5 * T4 + 720 * c5 * c5 * T5
    )
    g = np.zeros_like(coeffs)
    g[:, 3] = 72 * c3 * T + 144 * c4 * T2 + 240 * c5 * T3
    g[:, 4] = 144 * c3 * T2 + 384 * c4 * T3 + 720 * c5 * T4
    g[:, 5] = 240 * c3 * T3 + 720 * c4 * T4 + 1440 * c5 * T5
    jerk_end = 6 * c3 + 24 * c4 * T + 60 * c5 * T2
    gT = np.sum(jerk_end * jerk_end, axis=1)
    return float(np.sum(per)), g, gT


class MinJerkSystem:
    """Factorised linear system for given durations."""

    def __init__(self, durations):
        T = np.asarray(durations, dtype=float)
        if T.ndim != 1 or len(T) < 1:
            raise SplineError("need at least one piece")
        if not np.all(np.isfinite(T)) or np.any(T <= 0):
            raise SplineError("piece durations must be positive and finite")
        self.durations = T
        m = len(T)
        self.pieces = m
        n = NCOEF * m
        bT = np.stack([basis(T, k) for k in range(NCOEF)], axis=1)  # (m, 6 orders, 6 coefs)
        self._bT = bT
        rows, cols, vals = [], [], []
        # start state: d^k p_0(0) = k! c_0k
        rows.append(np.arange(3)), cols.append(np.arange(3)), vals.append(np.diag(_FF)[:3])
        if m > 1:
            i = np.arange(m - 1)
            r0 = 3 + 6 * i
            ci = 6 * i
            j = np.arange(NCOEF)
            # row r0 passes through the interior point; rows r0+1+k join derivative k
            for k in range(6):
                row = r0 if k == 0 else r0 + k
                order = 0 if k == 0 else k - 1
                jj = j[j >= order]
                rows.append(np.repeat(row, len(jj)))
                cols.append((ci[:, None] + jj[None, :]).ravel())
                vals.append(bT[i][:, order, jj].ravel())
            for k in range(5):
                rows.append(r0 + 1 + k), cols.append(ci + 6 + k), vals.append(np.full(m - 1, -_FF[k, k]))
        r0 = n - 3
        ci = 6 * (m - 1)
        for k in range(3):
            jj = np.arange(k, NCOEF)
            rows.append(np.full(len(jj), r0 + k)), cols.append(ci + jj), vals.append(bT[m - 1, k, jj])
        rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
        mat = csc_matrix((vals, (rows, cols)), shape=(n, n))
        try:
            self._lu = splu(mat)
        except RuntimeError as exc:
            raise SplineError(f"singular spline system: {exc}") from exc

    def rhs(self, interior, head, tail) -> np.ndarray:
        m = self.pieces
        b = np.zeros((NCOEF * m, 3))
        b[0:3] = head
        if m > 1:
            b[3 : 3 + 6 * (m - 1) : 6] = interior
        b[NCOEF * m - 3 :] = tail
        return b

    def solve(self, interior, head, tail) -> np.ndarray:
        c = self._lu.solve(self.rhs(interior, head, tail))
        if not np.all(np.isfinite(c)):
            raise SplineError("spline system produced non-finite coefficients")
        return c.reshape(self.pieces, NCOEF, 3)

    def backprop(self, coeffs: np.ndarray, grad_c: np.ndarray):
        """Pull d cost/d coeffs back to (d/d interior points, d/d durations)."""
        m = self.pieces
        G = self._lu.solve(grad_c.reshape(NCOEF * m, 3), trans="T")
        g_q = G[3 : 3 + 6 * (m - 1) : 6].copy()
        # rows whose coefficients depend on T_i use basis(T_i, k); d/dT = basis(T_i, k + 1)
        D = np.einsum("iok,ikd->iod", self._bT, coeffs)  # (m, order, 3)
        g_T = np.zeros(m)
        if m > 1:
            Gj = G[3 : 3 + 6 * (m - 1)].reshape(m - 1, 6, 3)
            g_T[: m - 1] = -np.einsum("ird,ird->i", Gj, D[: m - 1, [1, 1, 2, 3, 4, 5]])
        g_T[m - 1] = -np.sum(G[NCOEF * m - 3 :] * D[m - 1, 1:4])
        return g_q, g_T


@dataclass
class SplineTrajectory:
    coeffs: np.ndarray  # (M, 6, 3), p_j(t) = sum_k coeffs[j, k] t^k on [0, T_j]
    durations: np.ndarray  # (M,)
    piece_to_element: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        self.durations = np.asarray(self.durations, dtype=float)
        if not self.piece_to_element:
            self.piece_to_element = list(range(len(self.durations)))
        self._starts = np.concatenate([[0.0], np.cumsum(self.durations)])

    @property
    def pieces(self) -> int:
        return len(self.durations)

    @property
    def total_time(self) -> float:
        return float(self._starts[-1])

    @property
    def piece_starts(self) -> np.ndarray:
        return self._starts[:-1].copy()

    def locate(self, t):
        t = np.asarray(t, dtype=float)
        j = np.clip(np.searchsorted(self._starts, t, side="right") - 1, 0, self.pieces - 1)
        return j, t - self._starts[j]

    def evaluate(self, t, order: int = 0) -> np.ndarray:
        """Derivative of ``order`` (0..3) at time(s) ``t``."""
        if not 0 <= order <= 3:
            raise ValueError("order must be in 0..3")
        ta = np.asarray(t, dtype=float)
        tol = 1e-12 * max(1.0, self.total_time)
        if np.any(ta < -tol) or np.any(ta > self.total_time + tol):
            raise ValueError(f"t outside [0, {self.total_time}]")
        j, tl = self.locate(ta)
        b = basis(tl, order)
        return np.einsum("...k,...kd->...d", b, self.coeffs[j])

    def piece_eval(self, j: int, tl, order: int = 0) -> np.ndarray:
        return basis(tl, order) @ self.coeffs[j]

    def sample(self, dt: float):
        """Uniform samples; returns (t, pos, vel, acc)."""
        n = int(np.floor(self.total_time / dt + 1e-9))
        t = np.minimum(np.arange(n + 1) * dt, self.total_time)
        if t[-1] < self.total_time - 1e-12:
            t = np.append(t, self.total_time)
        return t, self.evaluate(t, 0), self.evaluate(t, 1), self.evaluate(t, 2)

    def jerk_integral(self) -> float:
        return jerk_cost(self.coeffs, self.durations)[0]

    def joint_mismatch(self) -> float:
        """Largest relative jump of position/velocity/acceleration across joints."""
        worst = 0.0
        for j in range(self.pieces - 1):
            for k in range(3):
                a = self.piece_eval(j, self.durations[j], k)
                b = self.piece_eval(j + 1, 0.0, k)
                scale = max(1.0, float(np.max(np.abs(a))), float(np.max(np.abs(b))))
                worst = max(worst, float(np.max(np.abs(a - b))) / scale)
        return worst

    # serialisation --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": "piecewise-quintic",
            "degree": DEG,
            "total_time": self.total_time,
            "pieces": [
                {
                    "duration": float(self.durations[j]),
                    "element": int(self.piece_to_element[j]),
                    "coeffs": self.coeffs[j].T.tolist(),  # per axis, ascending powers
                }
                for j in range(self.pieces)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SplineTrajectory":
        try:
            pieces = data["pieces"]
            coeffs = np.array([np.array(p["coeffs"], dtype=float).T for p in pieces])
            durations = np.array([float(p["duration"]) for p in pieces])
            elements = [int(p.get("element", j)) for j, p in enumerate(pieces)]
        except (KeyError, TypeError, ValueError) as exc:
            raise TrajectoryParseError(f"bad trajectory json: {exc}") from exc
        if coeffs.shape != (len(pieces), NCOEF, 3) or np.any(durations <= 0):
            raise TrajectoryParseError("bad trajectory json: wrong coefficient shape or durations")
        return cls(coeffs, durations, elements)

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    def save_csv(self, path, dt: float = 0.01) -> None:
        t, p, v, a = self.sample(dt)
        with open(path, "w") as fh:
            fh.write("t,x,y,z,vx,vy,vz,ax,ay,az\n")
            for k in range(len(t)):
                row = [t[k], *p[k], *v[k], *a[k]]
                fh.write(",".join(repr(float(x)) for x in row) + "\n")


def construct_spline(interior, durations, head, tail) -> SplineTrajectory:
    """Minimum-jerk spline through ``interior`` points (M-1, 3) with ``durations`` (M,).

    ``head`` and ``tail`` are (3, 3) arrays of position, velocity, acceleration.
    """
    durations = np.asarray(durations, dtype=float)
    interior = np.asarray(interior, dtype=float).reshape(-1, 3)
    if len(interior) != len(durations) - 1:
        raise SplineError("need exactly one interior point per joint")
    system = MinJerkSystem(durations)
    coeffs = system.solve(interior, np.asarray(head, float), np.asarray(tail, float))
    return SplineTrajectory(coeffs, durations)


@dataclass
class SampledTrajectory:
    """A trajectory known only through uniform samples (e.g. read from CSV)."""

    t: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray

    @property
    def total_time(self) -> float:
        return float(self.t[-1] - self.t[0])


def read_csv_trajectory(path) -> SampledTrajectory:
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header.replace(" ", "") != "t,x,y,z,vx,vy,vz,ax,ay,az":
            raise TrajectoryParseError(f"{path}: unexpected CSV header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            if len(parts) != 10:
                raise TrajectoryParseError(f"{path}: line {lineno}: expected 10 fields, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise TrajectoryParseError(f"{path}: line {lineno}: non-numeric field") from None
    if len(rows) < 2:
        raise TrajectoryParseError(f"{path}: fewer than two samples")
    arr = np.array(rows)
    if np.any(np.diff(arr[:, 0]) <= 0):
        raise TrajectoryParseError(f"{path}: time column must increase")
    return SampledTrajectory(arr[:, 0], arr[:, 1:4], arr[:, 4:7], arr[:, 7:10])
