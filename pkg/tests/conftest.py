from __future__ import annotations

import os
import sys
from functools import lru_cache

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from visplan.bench import generate_scene, scene_spec  # noqa: E402
from visplan.pointcloud import PointCloudMap  # noqa: E402

CRITERIA_LINES: list[str] = []


@lru_cache(maxsize=None)
def scene(scale: str, seed: int):
    return generate_scene(scene_spec(scale, seed))


@lru_cache(maxsize=None)
def maps(scale: str, seed: int, offset: float = 0.3):
    sc = scene(scale, seed)
    return PointCloudMap.from_points(sc.points, offset), PointCloudMap.from_points(sc.points, 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def wall_cloud(x: float = 2.0, half: float = 1.5, spacing: float = 0.05) -> np.ndarray:
    g = np.arange(-half, half + 1e-9, spacing)
    yy, zz = np.meshgrid(g, g)
    return np.column_stack([np.full(yy.size, x), yy.ravel(), zz.ravel()])


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LINES:
            terminalreporter.write_line(line)
