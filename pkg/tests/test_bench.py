from __future__ import annotations

import numpy as np
import pytest

from conftest import maps, scene
from visplan.bench import (
    Pillar,
    Ring,
    SCALES,
    TaskSpec,
    evaluate_run,
    generate_scene,
    longest_visible_run,
    read_task,
    scene_spec,
    write_scene,
)
from visplan.pointcloud import PointCloudMap, read_xyz
from visplan.spline import construct_spline


def hover(p, T=2.0):
    s = np.zeros((3, 3))
    s[0] = p
    return construct_spline(np.zeros((0, 3)), [T], s, s)


@pytest.mark.parametrize("scale", ["small", "medium", "large"])
def test_scale_counts(scale):
    sc = scene(scale, 0)
    want = SCALES[scale]
    assert len(sc.pillars) == want["pillar_count"]
    assert len(sc.rings) == want["ring_count"]
    assert len(sc.task.spots) == want["spot_count"]
    lo, hi = sc.task.bounds
    assert np.allclose(hi[:2] - lo[:2], np.array(want["extent"]) + 2.0)


@pytest.mark.parametrize("seed", range(5))
def test_spot_placement(seed):
    sc = scene("small", seed)
    spots = sc.task.spots
    assert (sc.clearance(spots) >= sc.spec.spot_clearance).all()
    d = np.linalg.norm(spots[:, None] - spots[None], axis=2) + np.eye(len(spots)) * 1e9
    assert d.min() >= sc.spec.spot_separation
    # start and goal are kept clear
    assert (sc.clearance(np.vstack([sc.task.start, sc.task.goal])) > 2.5).all()


def test_deterministic_per_seed():
    a = generate_scene(scene_spec("small", 4))
    b = generate_scene(scene_spec("small", 4))
    c = generate_scene(scene_spec("small", 5))
    assert np.array_equal(a.points, b.points) and np.array_equal(a.task.spots, b.task.spots)
    assert not np.array_equal(a.task.spots, c.task.spots)


def test_surface_density():
    p = Pillar(np.array([0.0, 0.0]), 0.5, 4.0)
    area = 2 * np.pi * 0.5 * 4.0 + np.pi * 0.25
    assert len(p.surface(0.2)) / area >= 10
    assert np.abs(p.distance(p.surface(0.2))).max() <= 1e-9
    r = Ring(np.zeros(3), np.array([0.0, 0.0, 1.0]), 1.5, 0.2)
    area = 4 * np.pi**2 * 1.5 * 0.2
    assert len(r.surface(0.2)) / area >= 10
    assert np.abs(r.distance(r.surface(0.2))).max() <= 1e-9


def test_write_and_read_bundle(tmp_path):
    sc = scene("small", 0)
    write_scene(sc, tmp_path)
    assert np.allclose(read_xyz(tmp_path / "map.xyz"), sc.points)
    t = read_task(tmp_path / "task.json")
    assert np.array_equal(t.spots, sc.task.spots) and np.array_equal(t.dwell, sc.task.dwell)


def test_task_defaults_and_errors():
    t = TaskSpec.from_dict({"spots": [[1, 2, 3]], "start": [0, 0, 1], "goal": [5, 5, 1], "dwell": 2})
    assert t.dwell.tolist() == [2.0] and np.allclose(t.bounds[0], [-8, -8, -7])
    with pytest.raises(ValueError):
        TaskSpec.from_dict({"spots": [[1, 2, 3]], "start": [0, 0, 1], "goal": [5, 5, 1], "dwell": [1, 2]})
    with pytest.raises(ValueError):
        scene_spec("huge")


def test_hover_observes_one_spot():
    sc = scene("small", 0)
    _, raw = maps("small", 0)
    spot = sc.task.spots[0]
    rep = evaluate_run(hover(spot + [0.2, 0, 0]), sc.task, raw)
    assert rep.observed[0] and rep.observed_time[0] >= 1.0
    assert rep.vis_capability == sum(rep.observed) / len(rep.observed)
    assert rep.max_speed == 0.0 and rep.jerk_integral == 0.0
    assert np.isclose(rep.traj_duration, 2.0)


def test_too_short_hover_misses():
    sc = scene("small", 0)
    _, raw = maps("small", 0)
    rep = evaluate_run(hover(sc.task.spots[0], 0.5), sc.task, raw)
    assert not rep.observed[0]


def test_wall_blocks_sight():
    g = np.arange(-2, 2.01, 0.05)
    yy, zz = np.meshgrid(g, g)
    wall = PointCloudMap.from_points(np.column_stack([np.ones(yy.size), yy.ravel(), zz.ravel()]))
    t = np.arange(101) * 0.01
    behind = np.tile([2.0, 0, 0], (101, 1))
    beside = np.tile([0.0, 2.5, 0], (101, 1))
    spot = np.zeros(3)
    assert longest_visible_run(t, behind, spot, wall, 6.0, 0.15, 0.01) == 0.0
    assert np.isclose(longest_visible_run(t, beside, spot, wall, 6.0, 0.15, 0.01), 1.01)
    assert longest_visible_run(t, beside, spot, wall, 2.0, 0.15, 0.01) == 0.0


def test_sampled_matches_spline_scoring():
    sc = scene("small", 1)
    _, raw = maps("small", 1)
    sp = hover(sc.task.spots[1], 1.5)
    a = evaluate_run(sp, sc.task, raw)
    b = evaluate_run(sp.sample(0.01), sc.task, raw)
    assert a.observed == b.observed and a.observed_time == b.observed_time


def test_report_dict_drops_empty_extra():
    rep = evaluate_run(hover(np.zeros(3)), TaskSpec.from_dict({"spots": [], "start": [0, 0, 0], "goal": [1, 1, 1]}),
                       PointCloudMap.from_points(np.zeros((0, 3))))
    assert rep.vis_capability == 1.0 and "extra" not in rep.to_dict()
