from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from syncloc.geometry import distance, los_matrix
from syncloc.world import (PEDESTRIAN, VEHICLE, AccessNode, CoverageGap, ScenarioConfig,
                           advance_trajectory, build_world, fence_posts, initial_state,
                           make_journey, random_route, select_an_indices, select_ans)


@pytest.fixture(scope="module")
def world():
    return build_world(ScenarioConfig())


def street_samples(world, step=2.5):
    pts = []
    for y in world.y_lines:
        for x in np.arange(0.0, world.x_lines[-1] + 1e-9, step):
            for off in (-5.0, 0.0, 5.0):
                pts.append((x, y + off))
    for x in world.x_lines:
        for y in np.arange(0.0, world.y_lines[-1] + 1e-9, step):
            for off in (-5.0, 0.0, 5.0):
                pts.append((x + off, y))
    return np.array(pts)


def test_every_street_point_has_a_los_an_within_50m(world):
    pts = street_samples(world)
    los = los_matrix(pts, world.an_pos, world.streets)
    d = np.hypot(pts[:, None, 0] - world.an_pos[None, :, 0],
                 pts[:, None, 1] - world.an_pos[None, :, 1])
    nearest = np.where(los, d, np.inf).min(axis=1)
    assert nearest.max() <= 50.0


def test_ans_are_on_streets_distinct_and_off_centrelines(world):
    assert len({tuple(p) for p in world.an_pos}) == len(world.ans)
    for an in world.ans:
        assert world.on_street(an.position)
        assert an.array_elements == 16
    # no AN sits on a centreline, so the MN never passes closer than half a street width
    for x in world.x_lines:
        assert np.all(np.abs(world.an_pos[:, 0] - x) >= 5.0 - 1e-9)
    for y in world.y_lines:
        assert np.all(np.abs(world.an_pos[:, 1] - y) >= 5.0 - 1e-9)


def test_single_street_fence_posts():
    assert len(fence_posts(100.0, 50.0)) == 3
    w = build_world(ScenarioConfig(width_m=100.0, height_m=0.0))
    assert len(w.ans) == 3


def test_build_world_deterministic():
    a, b = build_world(ScenarioConfig()), build_world(ScenarioConfig())
    np.testing.assert_array_equal(a.an_pos, b.an_pos)
    assert a.ans == b.ans


@pytest.mark.parametrize("kw", [dict(an_spacing_m=0.0), dict(delta_s=0.0),
                                dict(kind="tram"), dict(acc_min=3.0, acc_max=2.0)])
def test_scenario_config_validation(kw):
    with pytest.raises(ValueError):
        ScenarioConfig(**kw)


def test_access_node_needs_two_elements():
    with pytest.raises(ValueError):
        AccessNode(0, (0.0, 0.0), 0.0, array_elements=1)


def test_select_ans_ordering_and_ties(world):
    # on the bottom street centreline, between ANs at x=55 and x=105 (both at y=5)
    serving, passive = select_ans((80.0, 0.0), world, "two_an")
    assert {serving.position, passive.position} == {(55.0, 5.0), (105.0, 5.0)}
    assert serving.id < passive.id  # exact tie: lower id serves
    serving, passive = select_ans((60.0, 0.0), world, "two_an")
    assert serving.position == (55.0, 5.0)
    assert passive.position == (105.0, 5.0)
    _, none = select_ans((60.0, 0.0), world, "one_an")
    assert none is None


def test_select_matches_sort_oracle(world):
    rng = np.random.default_rng(4)
    pts = street_samples(world, step=7.3)
    pts = pts[rng.choice(len(pts), 200, replace=False)]
    first, second = select_an_indices(pts, world)
    los = los_matrix(pts, world.an_pos, world.streets)
    for k, p in enumerate(pts):
        cand = np.flatnonzero(los[k])
        d = distance(p, world.an_pos[cand])
        order = cand[np.lexsort((cand, d))]
        assert first[k] == order[0]
        assert second[k] == order[1]


def test_coverage_gap_raises(world):
    with pytest.raises(CoverageGap):
        select_ans((50.0, 50.0), world)  # inside a building block


def test_routes_stay_on_grid():
    cfg = ScenarioConfig()
    w = build_world(cfg)
    for seed in range(20):
        wp = random_route(cfg, np.random.default_rng(seed))
        assert len(wp) >= 2
        assert np.all(np.abs(np.diff(wp, axis=0)).sum(axis=1) == cfg.block_m)
        for p in wp:
            assert w.on_street(p)


def test_pedestrian_step_and_speed():
    cfg = ScenarioConfig(kind=PEDESTRIAN)
    j = make_journey(cfg, np.random.default_rng(0))
    s0 = initial_state(j)
    s1 = advance_trajectory(s0, j, cfg, np.random.default_rng(1), noise=False)
    assert distance(s0.position, s1.position) == pytest.approx(0.4)
    assert s1.speed == pytest.approx(2.0)
    assert s1.time == pytest.approx(0.2e9)


def test_vehicle_profile_from_rest():
    cfg = ScenarioConfig(kind=VEHICLE)
    j = make_journey(cfg, np.random.default_rng(3))
    a0 = j.phases[0, 3]
    s = advance_trajectory(initial_state(j), j, cfg, np.random.default_rng(0), noise=False)
    assert s.speed == pytest.approx(a0 * 0.2)
    assert 1.0 <= a0 <= 2.5


def simulate(cfg, seed, noise=True):
    j = make_journey(cfg, np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 100)
    s = initial_state(j)
    states = [s]
    while not s.done:
        s = advance_trajectory(s, j, cfg, rng, noise=noise)
        states.append(s)
    return j, states


@given(st.integers(0, 10_000))
def test_trajectory_invariants(seed):
    for kind in (PEDESTRIAN, VEHICLE):
        cfg = ScenarioConfig(kind=kind)
        w = build_world(cfg)
        _, states = simulate(cfg, seed, noise=False)
        speeds = np.array([s.speed for s in states])
        assert speeds.max() <= cfg.max_speed + 1e-9
        if kind == PEDESTRIAN:
            np.testing.assert_allclose(speeds, 2.0)
        assert all(w.on_street(s.position) for s in states[:: max(1, len(states) // 50)])


def test_noisy_speed_within_slack():
    for kind in (PEDESTRIAN, VEHICLE):
        cfg = ScenarioConfig(kind=kind)
        _, states = simulate(cfg, 11)
        speeds = np.array([s.speed for s in states])
        assert speeds.max() <= cfg.max_speed + 3 * cfg.acc_noise_std * cfg.delta_s + 1e-9


def test_trajectory_deterministic():
    cfg = ScenarioConfig(kind=VEHICLE)
    _, a = simulate(cfg, 5)
    _, b = simulate(cfg, 5)
    assert a == b


def test_pedestrian_has_more_rounds_than_vehicle_on_same_route():
    a = make_journey(ScenarioConfig(kind=PEDESTRIAN), np.random.default_rng(9))
    b = make_journey(ScenarioConfig(kind=VEHICLE), np.random.default_rng(9))
    np.testing.assert_array_equal(a.waypoints, b.waypoints)
    assert a.duration > b.duration
