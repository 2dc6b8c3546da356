from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import maps, scene, wall_cloud
from oracles import central_diff, rel_err
from visplan.pointcloud import PointCloudMap
from visplan.star_convex import (
    EPS_CENTER, FlipTransform, build_scp, export_scp_mesh, flip_point, flip_points, load_obj, lse, lse_distance,
    lse_values, point_in_scp, points_in_scp, unflip_points, visibility_violation, visibility_violation_batch,
)

EMPTY = PointCloudMap.from_points(np.zeros((0, 3)))


@pytest.fixture(scope="module")
def ball():
    return build_scp(EMPTY, np.zeros(3), 6.0, 20.0, 256)


@pytest.fixture(scope="module")
def wall():
    return build_scp(PointCloudMap.from_points(wall_cloud(2.0, 1.5, 0.05)), np.zeros(3))


def test_flip_examples():
    t = FlipTransform(np.zeros(3), 20.0, 6.0)
    assert np.allclose(flip_point(t, [5, 0, 0]), [35, 0, 0])
    assert np.isclose(np.linalg.norm(flip_point(t, [0, 20, 0])), 20.0)
    assert np.isclose(np.linalg.norm(flip_point(t, [0, 0, 0])), 40 - EPS_CENTER)
    with pytest.raises(ValueError):
        FlipTransform(np.zeros(3), 5.0, 6.0)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, 3, elements=st.floats(-50, 50)), arrays(np.float64, 3, elements=st.floats(-1, 1)),
       st.floats(1e-5, 1.0))
def test_flip_involution_and_monotone(center, direction, frac):
    if np.linalg.norm(direction) < 1e-3:
        return
    t = FlipTransform(center, 20.0, 6.0)
    u = direction / np.linalg.norm(direction)
    d = 6.0 * frac
    x = center + d * u
    xh = flip_point(t, x)
    assert abs(np.linalg.norm(xh) - (40.0 - d)) <= 1e-9
    assert np.linalg.norm(xh) > 20.0
    # flipping the image again (re-centred) restores the offset
    assert np.linalg.norm(unflip_points(t, xh)[0] - x) <= 1e-9 * max(1.0, np.linalg.norm(center))
    closer = center + 0.5 * d * u
    assert np.linalg.norm(flip_point(t, closer)) > np.linalg.norm(xh)


def test_batch_flip_matches_scalar(rng):
    t = FlipTransform(rng.normal(size=3), 20.0, 6.0)
    xs = rng.normal(size=(40, 3)) * 3
    assert np.allclose(flip_points(t, xs), [flip_point(t, x) for x in xs])


def test_empty_cloud_gives_ball(ball):
    assert point_in_scp(ball, [3.0, 0, 0])
    assert point_in_scp(ball, [0, 0, 0])
    assert not point_in_scp(ball, [6.01, 0, 0])
    r = np.linalg.norm(ball.scp_vertices, axis=1)
    assert len(ball.scp_vertices) == 256
    # vertices sit slightly inside R so that every face stays within the sensible ball
    assert np.allclose(r, r[0]) and 5.4 < r[0] < 6.0


def test_wall_shadow(wall):
    g = np.arange(-6, 6.01, 0.25)
    X = np.array(np.meshgrid(g, g, g)).reshape(3, -1).T
    d = np.linalg.norm(X, axis=1)
    X = X[(d > 0) & (d < 5.5)]
    inside = points_in_scp(wall, X)
    with np.errstate(divide="ignore", invalid="ignore"):
        behind = (X[:, 0] > 2) & np.all(np.abs(X[:, 1:] * 2.0 / X[:, :1]) < 1.5, axis=1)
    assert behind.sum() > 100 and not inside[behind].any()
    assert inside[X[:, 0] < 2].all()


def test_structural_invariants():
    cloud, _ = maps("small", 0)
    for c in scene("small", 0).task.spots:
        scp = build_scp(cloud, c)
        assert np.allclose(np.linalg.norm(scp.normals, axis=1), 1.0, atol=1e-9)
        assert np.all(scp.hull_vertices @ scp.normals.T <= scp.offsets + 1e-9)
        assert np.all(np.linalg.norm(scp.scp_vertices - c, axis=1) <= scp.bound_radius)
        assert np.allclose(np.einsum("ij,ij->i", scp.normals, scp.face_points), scp.offsets)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_local_vertices_see_the_center(seed):
    _, raw = maps("small", seed)
    for c in scene("small", seed).task.spots:
        scp = build_scp(raw, c)
        local = {tuple(p) for p in raw.range_query(c, 6.0)}
        verts = [v for v in scp.scp_vertices if tuple(v) in local]
        assert verts
        for v in verts:
            u = (v - c) / np.linalg.norm(v - c)
            # silhouette vertices are grazed by their own surface neighbours, so stop just short
            assert raw.segment_clear(c, v - 0.05 * u, 0.02)


def test_lse_examples():
    assert lse(np.array([0.3]), 100.0) == 0.3
    assert np.isclose(lse(np.array([0.0, 0.0]), 100.0), np.log(2) / 100, rtol=1e-12)
    assert np.isfinite(lse(np.array([50.0, 49.0]), 100.0))
    with pytest.raises(ValueError):
        lse_distance(build_scp(EMPTY, np.zeros(3)), [1, 0, 0], 0.0)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 40), elements=st.floats(-10, 10)), st.floats(1.0, 500.0))
def test_lse_sandwich(values, alpha):
    v = lse(values, alpha)
    m = values.max()
    assert m <= v <= m + np.log(len(values)) / alpha + 1e-12


def test_membership_matches_hard_max(rng):
    cloud, _ = maps("small", 1)
    c = scene("small", 1).task.spots[0]
    scp = build_scp(cloud, c)
    xs = c + rng.uniform(-6, 6, size=(3000, 3))
    dist = flip_points(scp.transform, xs) @ scp.normals.T - scp.offsets
    far = np.all(np.abs(dist) > 1e-3, axis=1) | (dist.max(axis=1) > 1e-3)
    assert np.array_equal(points_in_scp(scp, xs)[far], (dist.max(axis=1) > 0)[far])
    assert all(point_in_scp(scp, x) == b for x, b in zip(xs[:200], points_in_scp(scp, xs[:200])))


def test_violation_branches(ball):
    x = np.array([5.5, 0.0, 0.0])
    L = lse_values(ball, x, 100.0)[0]
    val, g = visibility_violation(ball, x, L - 0.01, 100.0, 1e4)
    assert val == 0.0 and not g.any()
    val, _ = visibility_violation(ball, x, L + 0.1, 100.0, 1e4)
    assert np.isclose(val, 10.0, rtol=1e-9)
    val, g = visibility_violation(ball, np.zeros(3), 1.0, 100.0, 1e4)
    assert val == 0.0 and not g.any()


def _random_pair(rng, cloud, centers):
    c = centers[rng.integers(len(centers))]
    scp = build_scp(cloud, c)
    u = rng.normal(size=3)
    u /= np.linalg.norm(u)
    x = c + rng.uniform(0.5, 1.2) * scp.boundary_radius(u) * u
    return scp, x


def test_violation_gradient_matches_finite_differences(rng):
    cloud, _ = maps("small", 2)
    centers = scene("small", 2).task.spots
    checked = 0
    while checked < 30:
        scp, x = _random_pair(rng, cloud, centers)
        d_min = lse_values(scp, x, 100.0)[0] + rng.uniform(0.05, 0.5)
        val, g = visibility_violation(scp, x, d_min, 100.0, 1e4)
        fd = central_diff(lambda z: visibility_violation(scp, z, d_min, 100.0, 1e4)[0], x, 1e-5)
        assert rel_err(g, fd) <= 1e-4
        checked += 1


def test_hint_cache_does_not_change_results(rng):
    cloud, _ = maps("small", 0)
    c = scene("small", 0).task.spots[1]
    xs = c + rng.uniform(-4, 4, size=(500, 3))
    cold = build_scp(cloud, c)
    want_v, want_g = visibility_violation_batch(cold, xs, 0.1, 100.0, 1e4)
    warm = build_scp(cloud, c)
    for chunk in np.array_split(xs, 10):
        visibility_violation_batch(warm, chunk, 0.1, 100.0, 1e4)
    got_v, got_g = visibility_violation_batch(warm, xs, 0.1, 100.0, 1e4)
    assert np.array_equal(got_v, want_v) and np.array_equal(got_g, want_g)


def test_mesh_export_round_trip(tmp_path, ball):
    path = tmp_path / "ball.obj"
    export_scp_mesh(ball, path)
    verts, faces = load_obj(path)
    assert np.allclose(verts, ball.scp_vertices, atol=1e-6)
    assert len(faces) == ball.face_count
    a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    assert np.all(np.einsum("ij,ij->i", np.cross(b - a, c - a), a + b + c) > 0)
    with pytest.raises(ValueError):
        export_scp_mesh(ball, "")


def test_augment_count_floor():
    with pytest.raises(ValueError):
        build_scp(EMPTY, np.zeros(3), augment_count=16)
