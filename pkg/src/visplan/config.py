"""Planner configuration: one flat set of tunables, loadable from JSON."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields

from .trajopt import TrajOptConfig


@dataclass(frozen=True)
class PlannerConfig:
    bound_radius: float = 6.0  # R, sensible ball
    flip_radius: float = 20.0  # r
    alpha: float = 100.0
    d_min: float = 0.1
    rho: float = 150.0
    eta: int = 10
    v_max: float = 4.0
    a_max: float = 6.0
    lambda_vis: float = 1e4
    lambda_safe: float = 1e4
    lambda_dyn: float = 1e4
    route_penalty: float = 1e4
    route_epsilon: float = 1e-4
    route_restarts: int = 12
    waypoint_clearance: float = 0.3  # from inflated points; 0 disables
    voxel_resolution: float = 0.0  # 0 picks 0.25 m, coarsened until the grid fits max_voxels
    max_voxels: int = 1_500_000
    search_dilation: int = 2  # voxels of extra clearance tried first by A*
    augment_count: int = 256
    inflation_offset: float = 0.3
    gen_radius: float = 3.0
    max_polys_per_leg: int = 64
    atsp_restarts: int = 16
    seed: int = 0
    trajopt_iters: int = 400
    escalations: int = 5
    sight_clearance: float = 0.15
    sample_dt: float = 0.01

    def __post_init__(self):
        if not 0 < self.bound_radius < self.flip_radius:
            raise ValueError("need 0 < bound_radius < flip_radius")
        positive = ("alpha", "d_min", "rho", "v_max", "a_max", "lambda_vis", "lambda_safe", "lambda_dyn",
                    "route_penalty", "route_epsilon", "gen_radius", "sight_clearance", "sample_dt")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.eta < 4:
            raise ValueError("eta must be at least 4")
        if min(self.voxel_resolution, self.inflation_offset, self.waypoint_clearance) < 0:
            raise ValueError("voxel_resolution, inflation_offset and waypoint_clearance must be non-negative")
        if self.augment_count < 32:
            raise ValueError("augment_count must be at least 32")
        for name in ("trajopt_iters", "max_polys_per_leg", "max_voxels"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if min(self.escalations, self.atsp_restarts, self.route_restarts, self.search_dilation) < 0:
            raise ValueError("restart and escalation counts must be non-negative")

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_dict(cls, data: dict) -> "PlannerConfig":
        unknown = sorted(set(data) - set(cls.keys()))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        types = {f.name: f.type for f in fields(cls)}
        clean = {}
        for k, v in data.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ValueError(f"config key {k} must be a number")
            clean[k] = int(v) if types[k] == "int" else float(v)
        return cls(**clean)

    @classmethod
    def load(cls, path: str | os.PathLike, overrides: dict | None = None) -> "PlannerConfig":
        with open(path) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
        data.update(overrides or {})
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def trajopt(self) -> TrajOptConfig:
        return TrajOptConfig(
            rho=self.rho, v_max=self.v_max, a_max=self.a_max, eta=self.eta, alpha=self.alpha, d_min=self.d_min,
            lambda_vis=self.lambda_vis, lambda_safe=self.lambda_safe, lambda_dyn=self.lambda_dyn,
            max_iters=self.trajopt_iters, escalations=self.escalations,
        )
