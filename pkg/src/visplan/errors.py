"""Exception types raised by the planner stages.

Every stage error carries a short machine-readable ``code`` so the CLI can
write it into ``report.json`` without string matching.
"""

from __future__ import annotations


class PlannerError(Exception):
    code = "planner_error"

    def to_dict(self) -> dict:
        return {"code": self.code, "message": str(self)}


class MapParseError(PlannerError):
    code = "parse_error"

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyMapError(PlannerError):
    code = "empty_map"


class ResourceError(PlannerError):
    code = "resource_error"


class HullError(PlannerError):
    code = "hull_error"


class InfeasibleRouteError(PlannerError):
    code = "infeasible_route"

    def __init__(self, message: str, spot: int):
        super().__init__(message)
        self.spot = spot

    def to_dict(self) -> dict:
        return {**super().to_dict(), "spot": self.spot}


class UnreachableError(PlannerError):
    code = "unreachable"

    def __init__(self, message: str, start=None, goal=None, spot: int | None = None):
        super().__init__(message)
        self.start = None if start is None else [float(v) for v in start]
        self.goal = None if goal is None else [float(v) for v in goal]
        self.spot = spot

    def to_dict(self) -> dict:
        return {**super().to_dict(), "start": self.start, "goal": self.goal, "spot": self.spot}


class SeedCollisionError(PlannerError):
    code = "seed_in_collision"


class CorridorError(PlannerError):
    code = "corridor_failure"

    def __init__(self, message: str, leg: int):
        super().__init__(message)
        self.leg = leg

    def to_dict(self) -> dict:
        return {**super().to_dict(), "leg": self.leg}


class SplineError(PlannerError):
    code = "spline_error"


class OptimizationFailure(PlannerError):
    code = "optimization_failure"

    def __init__(self, message: str, violations: list[str]):
        super().__init__(message)
        self.violations = list(violations)

    def to_dict(self) -> dict:
        return {**super().to_dict(), "violations": self.violations}


class TrajectoryParseError(PlannerError):
    code = "parse_error"
