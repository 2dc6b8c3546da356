"""Inspection trajectory planning with visibility guarantees on point-cloud maps."""

from .errors import PlannerError

__all__ = ["PlannerError"]
__version__ = "0.1.0"
