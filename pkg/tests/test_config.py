from __future__ import annotations

import json

import pytest

from visplan.config import PlannerConfig


def test_defaults():
    cfg = PlannerConfig()
    assert (cfg.bound_radius, cfg.alpha, cfg.d_min, cfg.rho, cfg.eta) == (6.0, 100.0, 0.1, 150.0, 10)
    t = cfg.trajopt()
    assert (t.v_max, t.a_max, t.max_iters) == (4.0, 6.0, cfg.trajopt_iters)


def test_round_trip_and_types(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"eta": 12.0, "rho": 75}))
    cfg = PlannerConfig.load(path, {"v_max": 3})
    assert cfg.eta == 12 and isinstance(cfg.eta, int) and cfg.rho == 75.0 and cfg.v_max == 3.0
    assert PlannerConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("bad", [
    {"colour": 1},
    {"bound_radius": 25.0},
    {"rho": 0},
    {"eta": 3},
    {"alpha": "high"},
    {"seed": True},
    {"augment_count": 8},
])
def test_rejects_bad_values(bad):
    with pytest.raises(ValueError):
        PlannerConfig.from_dict(bad)


def test_non_object_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("[1, 2]")
    with pytest.raises(ValueError):
        PlannerConfig.load(path)
