"""Spatial-temporal trajectory optimisation through the corridor."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .corridor import Corridor
from .errors import OptimizationFailure
from .nlp import SolveOptions, minimize
from .pointcloud import PointCloudMap
from .spline import MinJerkSystem, SplineTrajectory, basis, jerk_cost
from .star_convex import StarPolytope, points_in_scp, visibility_violation_batch


@dataclass(frozen=True)
class TrajOptConfig:
    rho: float = 150.0
    v_max: float = 4.0
    a_max: float = 6.0
    eta: int = 10
    alpha: float = 100.0
    d_min: float = 0.1
    lambda_vis: float = 1e4
    lambda_safe: float = 1e4
    lambda_dyn: float = 1e4
    max_iters: int = 2000
    gtol: float = 1e-4
    escalations: int = 5
    max_density: int = 16  # cap on the per-piece sample multiplier

    def __post_init__(self):
        for name in ("rho", "v_max", "a_max", "alpha", "d_min", "lambda_vis", "lambda_safe", "lambda_dyn", "gtol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.eta < 4:
            raise ValueError("eta must be at least 4")
        if self.max_density < 1:
            raise ValueError("max_density must be at least 1")


def xi_to_time(xi, tau):
    return np.exp(xi) + tau


class TrajectoryProblem:
    """Cost over x = [interior joints (M-1)*3, xi (M)] for a fixed corridor.

    ``density[j]`` multiplies the per-piece sample count eta (default 1).
    """

    def __init__(self, corridor: Corridor, scps: list[StarPolytope], head, tail, config: TrajOptConfig,
                 density=None):
        self.corridor = corridor
        self.scps = scps
        self.cfg = config
        self.head = np.asarray(head, dtype=float).reshape(3, 3)
        self.tail = np.asarray(tail, dtype=float).reshape(3, 3)
        els = corridor.elements
        self.m = len(els)
        self.tau = np.array([e.dwell if e.kind == "scp" else 0.0 for e in els])
        self.density = np.ones(self.m, dtype=int) if density is None else np.asarray(density, dtype=int)
        self.groups = []
        for level in sorted(set(self.density.tolist())):
            idx = np.nonzero(self.density == level)[0]
            n = config.eta * level
            poly = np.array([r for r, j in enumerate(idx) if els[j].kind == "poly"], dtype=np.intp)
            A = b = None
            if len(poly):
                kmax = max(els[idx[r]].poly.normals.shape[0] for r in poly)
                A = np.zeros((len(poly), kmax, 3))
                b = np.full((len(poly), kmax), 1e9)  # padding faces never activate
                for q, r in enumerate(poly):
                    pl = els[idx[r]].poly
                    A[q, : len(pl.offsets)] = pl.normals
                    b[q, : len(pl.offsets)] = pl.offsets
            scp = [(r, els[j].scp_index) for r, j in enumerate(idx) if els[j].kind == "scp"]
            self.groups.append((idx, n, np.arange(n + 1) / n, poly, A, b, scp))
        self.evaluations = 0

    @property
    def dim(self) -> int:
        return 3 * (self.m - 1) + self.m

    def pack(self, q, xi) -> np.ndarray:
        return np.concatenate([np.asarray(q, dtype=float).ravel(), np.asarray(xi, dtype=float)])

    def unpack(self, x):
        k = 3 * (self.m - 1)
        return x[:k].reshape(-1, 3), x[k:]

    def trajectory(self, x, piece_to_element=None) -> SplineTrajectory:
        q, xi = self.unpack(x)
        T = xi_to_time(xi, self.tau)
        c = MinJerkSystem(T).solve(q, self.head, self.tail)
        return SplineTrajectory(c, T, list(piece_to_element or range(self.m)))

    def penalties(self, c, T):
        """Sampled penalty sum with gradients w.r.t. coefficients and (explicit) durations."""
        grad_c = np.zeros_like(c)
        grad_T = np.zeros_like(T)
        parts = {"safe": 0.0, "vis": 0.0, "dyn": 0.0}
        for idx, n, s, poly, A, b, scp in self.groups:
            gc, gT = self._group(c[idx], T[idx], n, s, poly, A, b, scp, parts)
            grad_c[idx] = gc
            grad_T[idx] = gT
        return parts["safe"] + parts["vis"] + parts["dyn"], grad_c, grad_T, parts

    def _group(self, c, T, n, s, poly, A, b, scp, parts):
        cfg = self.cfg
        t = T[:, None] * s[None, :]
        B = [basis(t, k) for k in range(4)]  # each (m, S, 6)
        pos, vel, acc, jrk = (np.einsum("msj,mjd->msd", Bk, c) for Bk in B)
        P = np.zeros(t.shape)
        gp = np.zeros(pos.shape)
        gv = np.zeros(pos.shape)
        ga = np.zeros(pos.shape)
        w = T / n
        if len(poly):
            viol = np.einsum("psd,pkd->psk", pos[poly], A) - b[:, None, :] + cfg.d_min
            viol = np.maximum(viol, 0.0)
            P_poly = cfg.lambda_safe * np.sum(viol**3, axis=2)
            P[poly] += P_poly
            gp[poly] += cfg.lambda_safe * np.einsum("psk,pkd->psd", 3 * viol**2, A)
            parts["safe"] += float(np.sum(w[poly] * P_poly.sum(axis=1)))
        for r, si in scp:
            vals, grads = visibility_violation_batch(self.scps[si], pos[r], cfg.d_min, cfg.alpha, cfg.lambda_vis)
            P[r] += vals
            gp[r] += grads
            parts["vis"] += float(w[r] * vals.sum())
        vp = np.maximum(np.sum(vel * vel, axis=2) - cfg.v_max**2, 0.0)
        ap = np.maximum(np.sum(acc * acc, axis=2) - cfg.a_max**2, 0.0)
        P_dyn = cfg.lambda_dyn * (vp**3 + ap**3)
        P += P_dyn
        gv += (cfg.lambda_dyn * 6 * vp**2)[..., None] * vel
        ga += (cfg.lambda_dyn * 6 * ap**2)[..., None] * acc
        parts["dyn"] += float(np.sum(w * P_dyn.sum(axis=1)))
        grad_c = w[:, None, None] * (
            np.einsum("msj,msd->mjd", B[0], gp) + np.einsum("msj,msd->mjd", B[1], gv) + np.einsum("msj,msd->mjd", B[2], ga)
        )
        chain = np.sum(gp * vel + gv * acc + ga * jrk, axis=2)  # dP/dt along each sample
        grad_T = P.sum(axis=1) / n + w * np.sum(chain * s[None, :], axis=1)
        return grad_c, grad_T

    def cost_grad(self, x):
        # wild line-search trials may overflow; the search rejects non-finite values
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            return self._cost_grad(x)

    def _cost_grad(self, x):
        self.evaluations += 1
        q, xi = self.unpack(x)
        eT = np.exp(xi)
        T = eT + self.tau
        system = MinJerkSystem(T)
        c = system.solve(q, self.head, self.tail)
        jv, jc, jT = jerk_cost(c, T)
        pv, pc, pT, _ = self.penalties(c, T)
        value = jv + self.cfg.rho * float(np.sum(T)) + pv
        g_q, g_T = system.backprop(c, jc + pc)
        g_T = g_T + jT + pT + self.cfg.rho
        return value, np.concatenate([g_q.ravel(), g_T * eT])

    def breakdown(self, x) -> dict:
        q, xi = self.unpack(x)
        T = xi_to_time(xi, self.tau)
        c = MinJerkSystem(T).solve(q, self.head, self.tail)
        jv, _, _ = jerk_cost(c, T)
        _, _, _, parts = self.penalties(c, T)
        return {"jerk": jv, "time": float(np.sum(T)), **parts}


def total_cost(traj: SplineTrajectory, corridor: Corridor, scps, config: TrajOptConfig):
    """Cost of ``traj`` and gradients w.r.t. its interior joints and xi."""
    head = np.array([traj.evaluate(0.0, k) for k in range(3)])
    tail = np.array([traj.evaluate(traj.total_time, k) for k in range(3)])
    prob = TrajectoryProblem(corridor, scps, head, tail, config)
    joints = np.array([traj.piece_eval(j, traj.durations[j]) for j in range(traj.pieces - 1)]).reshape(-1, 3)
    xi = np.log(traj.durations - prob.tau)
    value, grad = prob.cost_grad(prob.pack(joints, xi))
    g_q, g_xi = prob.unpack(grad)
    return value, g_q, g_xi


def trapezoid_time(length: float, v: float, a: float) -> float:
    if length <= 0:
        return 0.0
    if length >= v * v / a:
        return length / v + v / a
    return 2.0 * np.sqrt(length / a)


def initial_guess(prob: TrajectoryProblem):
    cfg = prob.cfg
    cor = prob.corridor
    q = np.array(cor.anchors if len(cor.anchors) == len(cor.junctions) else cor.junctions, dtype=float).reshape(-1, 3)
    pts = np.vstack([prob.head[0], q, prob.tail[0]])
    lens = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    T0 = np.array([trapezoid_time(L, 0.5 * cfg.v_max, cfg.a_max) for L in lens])
    xi = np.log(np.maximum(T0 - prob.tau, 0.1))
    return prob.pack(q, xi)


@dataclass
class CheckReport:
    violations: list[str] = field(default_factory=list)
    max_speed: float = 0.0
    max_acc: float = 0.0
    containment: float = 0.0  # worst polytope excess (n.p - b)
    joint_mismatch: float = 0.0
    kinds: set = field(default_factory=set)
    bad_pieces: set = field(default_factory=set)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_trajectory(
    traj: SplineTrajectory,
    corridor: Corridor,
    scps: list[StarPolytope],
    config: TrajOptConfig,
    head=None,
    tail=None,
    dt: float = 0.01,
    sight_map: PointCloudMap | None = None,
    sight_clearance: float = 0.0,
) -> CheckReport:
    """Sampled feasibility checks of an optimised trajectory."""
    rep = CheckReport()
    tau = np.array([corridor.elements[e].dwell if corridor.elements[e].kind == "scp" else 0.0
                    for e in traj.piece_to_element])
    if not np.all(traj.durations > tau):
        rep.violations.append("dwell: some T_i <= tau_i")
        rep.kinds.add("dwell")
    rep.joint_mismatch = traj.joint_mismatch()
    if rep.joint_mismatch > 1e-9:
        rep.violations.append(f"continuity: joint mismatch {rep.joint_mismatch:.3e}")
        rep.kinds.add("continuity")
    for name, want, t in (("start", head, 0.0), ("goal", tail, traj.total_time)):
        if want is None:
            continue
        got = np.array([traj.evaluate(t, k) for k in range(3)])
        err = float(np.max(np.abs(got - np.asarray(want).reshape(3, 3))))
        if err > 1e-9 * max(1.0, float(np.max(np.abs(want)))):
            rep.violations.append(f"boundary: {name} state off by {err:.3e}")
            rep.kinds.add("continuity")
    for j in range(traj.pieces):
        Tj = traj.durations[j]
        n = max(2, int(np.ceil(Tj / dt)) + 1)
        tl = np.linspace(0.0, Tj, n)
        p = traj.piece_eval(j, tl, 0)
        v = np.linalg.norm(traj.piece_eval(j, tl, 1), axis=1)
        a = np.linalg.norm(traj.piece_eval(j, tl, 2), axis=1)
        rep.max_speed = max(rep.max_speed, float(v.max()))
        rep.max_acc = max(rep.max_acc, float(a.max()))
        el = corridor.elements[traj.piece_to_element[j]]
        if el.kind == "poly":
            exc = float(np.max(p @ el.poly.normals.T - el.poly.offsets))
            rep.containment = max(rep.containment, exc)
            if exc > 1e-3:
                rep.violations.append(f"containment: piece {j} leaves its polytope by {exc:.3e} m")
                rep.kinds.add("safe")
                rep.bad_pieces.add(j)
        else:
            scp = scps[el.scp_index]
            inside = points_in_scp(scp, p)
            if not np.all(inside):
                rep.violations.append(f"visibility: piece {j} has {int(np.sum(~inside))} samples outside SCP {el.scp_index}")
                rep.kinds.add("vis")
                rep.bad_pieces.add(j)
            elif sight_map is not None:
                far = np.linalg.norm(p - scp.center, axis=1) > scp.bound_radius
                blocked = [k for k in range(len(p)) if not sight_map.segment_clear(p[k], scp.center, sight_clearance)]
                if np.any(far) or blocked:
                    rep.violations.append(
                        f"visibility: piece {j} has {len(blocked) + int(np.sum(far))} samples without a clear sight line"
                    )
                    rep.kinds.add("sight")
                    rep.bad_pieces.add(j)
    if rep.max_speed > config.v_max * 1.01:
        rep.violations.append(f"dynamics: max speed {rep.max_speed:.4f} > {config.v_max} (1%)")
        rep.kinds.add("dyn")
    if rep.max_acc > config.a_max * 1.01:
        rep.violations.append(f"dynamics: max acceleration {rep.max_acc:.4f} > {config.a_max} (1%)")
        rep.kinds.add("dyn")
    return rep


@dataclass
class TrajOptResult:
    trajectory: SplineTrajectory
    cost: float
    iterations: int
    status: str
    rounds: int
    check: CheckReport
    config: TrajOptConfig
    history: list[float] = field(repr=False, default_factory=list)


def optimize_trajectory(
    corridor: Corridor,
    scps: list[StarPolytope],
    head,
    tail,
    config: TrajOptConfig | None = None,
    sight_map: PointCloudMap | None = None,
    sight_clearance: float = 0.0,
) -> TrajOptResult:
    """Minimise the total cost, verify the result and escalate penalties on failure."""
    cfg = config or TrajOptConfig()
    head = np.asarray(head, dtype=float).reshape(3, 3)
    tail = np.asarray(tail, dtype=float).reshape(3, 3)
    x = None
    density = np.ones(len(corridor.elements), dtype=int)
    iters = 0
    history: list[float] = []
    rep = None
    for rnd in range(cfg.escalations + 1):
        prob = TrajectoryProblem(corridor, scps, head, tail, cfg, density)
        if x is None:
            x = initial_guess(prob)
        res = minimize(prob.cost_grad, x, SolveOptions(gtol=cfg.gtol, max_iters=cfg.max_iters))
        x = res.argmin
        iters += res.iterations
        history.extend(res.history)
        traj = prob.trajectory(x)
        rep = check_trajectory(traj, corridor, scps, cfg, head, tail, sight_map=sight_map, sight_clearance=sight_clearance)
        if rep.ok:
            return TrajOptResult(traj, res.value, iters, res.status, rnd, rep, cfg, history)
        bump = {}
        if "safe" in rep.kinds:
            bump["lambda_safe"] = cfg.lambda_safe * 10
        if rep.kinds & {"vis", "sight"}:
            bump["lambda_vis"] = cfg.lambda_vis * 10
        if "dyn" in rep.kinds:
            bump["lambda_dyn"] = cfg.lambda_dyn * 10
        if not bump:
            break
        cfg = replace(cfg, **bump)
        # denser penalty samples where the check caught violations between them
        for j in rep.bad_pieces:
            density[j] = min(density[j] * 4, cfg.max_density)
    raise OptimizationFailure("trajectory failed post-checks: " + "; ".join(rep.violations[:6]), violations=rep.violations)
