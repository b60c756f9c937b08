import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from citylight import kernels
from citylight.features import (
    FEATURE_NAMES,
    K_VALUES,
    STATE_DIM,
    ZoneStats,
    build_state,
    build_states,
    phase_aggregate,
    phase_pressure,
    vehicle_delay,
    vehicle_queue_status,
    zone_stats,
)
from citylight.grid import gen_grid
from citylight.road_network import PHASE_TABLE, network_from_dict
from citylight.sim import SimWorld

from conftest import single_intersection


def empty_world(net, n_slots=64):
    """A world with ``n_slots`` parked (inactive) vehicles that tests can place by hand."""
    w = SimWorld(net, [])
    n = n_slots
    w.veh_lane = np.full(n, -1, dtype=np.int64)
    w.veh_pos = np.zeros(n)
    w.veh_speed = np.zeros(n)
    w.veh_status = np.zeros(n, dtype=np.int64)
    return w


def place(world, placements, inter=0):
    """placements: (slot, distance to the intersection, speed); returns the vehicle ids used."""
    table = world.int_lanes[inter]
    for vid, (slot, dist, speed) in enumerate(placements):
        lane = table[slot]
        L = world.lane_len[lane]
        world.veh_lane[vid] = lane
        world.veh_pos[vid] = L - dist if slot < 12 else dist
        world.veh_speed[vid] = speed
        world.veh_status[vid] = kernels.ACTIVE
    return list(range(len(placements)))


def brute_zone(world, k, inter=0):
    """Straight loop over vehicles and slots, independent of the kernels."""
    x, d, q = np.zeros(24), np.zeros(24), np.zeros(24)
    for slot in range(24):
        lane = world.int_lanes[inter, slot]
        if lane < 0:
            continue
        L, vmax = world.lane_len[lane], world.lane_vmax[lane]
        eff = min(k, L)
        ds = []
        for vid in range(world.veh_lane.size):
            if world.veh_status[vid] != kernels.ACTIVE or world.veh_lane[vid] != lane:
                continue
            dist = L - world.veh_pos[vid] if slot < 12 else world.veh_pos[vid]
            if dist < eff:
                ds.append(1 - world.veh_speed[vid] / vmax)
                q[slot] += world.veh_speed[vid] < 0.3
        x[slot] = len(ds)
        d[slot] = sum(ds) / len(ds) if ds else 0.0
    return x, d, q


@pytest.fixture
def world(one_net):
    return empty_world(one_net)


def test_vehicle_level_examples():
    assert vehicle_delay(0.0, 16.7) == 1.0
    assert vehicle_delay(16.7, 16.7) == 0.0
    assert vehicle_delay(5.0, 20.0) == 0.75
    assert vehicle_queue_status(0.0) == 1
    assert vehicle_queue_status(0.3) == 0
    assert vehicle_queue_status(10.0) == 0


def test_membership_example(world):
    place(world, [(0, 10.0, 0.0), (0, 50.0, 15.0), (0, 150.0, 15.0)])
    st = zone_stats(world, 0, 100.0)
    assert st.x[0] == 2
    assert st.q[0] == 1
    assert st.d[0] == pytest.approx(0.5)
    assert st.x.sum() == 2


def test_short_lane_is_capped():
    w = empty_world(network_from_dict(single_intersection(lane_len=40.0)))
    place(w, [(1, 39.9, 0.0), (13, 39.9, 0.0)])
    st = zone_stats(w, 0, 60.0)
    assert st.x[1] == 1 and st.x[13] == 1


def test_boundary_distance_is_excluded(world):
    place(world, [(1, 60.0, 0.0), (13, 60.0, 0.0)])
    st = zone_stats(world, 0, 60.0)
    assert st.x.sum() == 0


def test_empty_zone(world):
    st = zone_stats(world, 0, 100.0)
    assert not st.x.any() and not st.d.any() and not st.q.any()
    with pytest.raises(ValueError):
        zone_stats(world, 0, 0.0)


def test_missing_slots_are_zero(tee_net):
    w = empty_world(tee_net)
    place(w, [(1, 5.0, 0.0)])
    st = zone_stats(w, 0, 200.0)
    for s in range(24):
        if w.int_lanes[0, s] < 0:
            assert st.x[s] == st.d[s] == st.q[s] == 0
    # phase 3 pairs E-left with the absent W-left
    stats = ZoneStats("c", 60.0, np.eye(24)[3] * 4, np.zeros(24), np.zeros(24))
    assert phase_aggregate(stats, 3, "x") == 4.0


def test_phase_aggregate_and_pressure_examples():
    x = np.zeros(24)
    x[0], x[6] = 4, 2
    x[[15, 16, 17, 21, 22, 23]] = 1
    st = ZoneStats("c", 60.0, x, np.zeros(24), np.zeros(24))
    assert phase_aggregate(st, 1, "x") == 6.0
    assert phase_pressure(st, 1, "x") == pytest.approx(4.0)
    zero = ZoneStats("c", 60.0, np.zeros(24), np.zeros(24), np.zeros(24))
    assert phase_aggregate(zero, 1, "x") == 0.0
    assert phase_pressure(zero, 5, "q") == 0.0
    down = np.zeros(24)
    down[[12, 13, 14]] = 3  # S-through exits north
    assert phase_pressure(ZoneStats("c", 60.0, down, down, down), 7, "x") == pytest.approx(-3.0)


def test_empty_state_at_start(world):
    s = build_state(world, 0)
    assert s.shape == (STATE_DIM,) == (154,)
    assert len(FEATURE_NAMES) == 154
    assert not s[:144].any()
    assert s[144:152].tolist() == [1, 0, 0, 0, 0, 0, 0, 0]
    assert s[152] == 0 and s[153] == 0


def test_state_matches_standalone_ops():
    net, flows = gen_grid(2, 2)
    w = SimWorld(net, flows)
    for t in range(400):
        if t == 200:
            w.request(1, 4)
        w.step()
    states = build_states(w)
    assert states.shape == (4, 154)
    for i in range(4):
        for gi, g in enumerate(("x", "d", "q", "x_pressure", "d_pressure", "q_pressure")):
            for ki, k in enumerate(K_VALUES):
                stats = zone_stats(w, i, k)
                for p in range(1, 9):
                    col = FEATURE_NAMES.index(f"{g}_k{int(k)}_p{p}")
                    assert col == gi * 24 + ki * 8 + (p - 1)
                    base = g.split("_")[0]
                    want = phase_pressure(stats, p, base) if g.endswith("pressure") else phase_aggregate(stats, p, base)
                    assert states[i, col] == pytest.approx(want, abs=1e-12)
        cs = w.controllers[i]
        assert states[i, 144 + cs.current_phase - 1] == 1 and states[i, 144:152].sum() == 1
        assert states[i, 152] == pytest.approx(400 / 3600)
        assert states[i, 153] == pytest.approx(cs.green_elapsed / 30)


placements = st.lists(
    st.tuples(st.integers(0, 23), st.floats(0.0, 299.9), st.sampled_from([0.0, 0.2, 7.5, 15.0])),
    max_size=40,
)


@settings(max_examples=60, deadline=None)
@given(placements, st.sampled_from([30.0, 60.0, 100.0, 200.0, 250.0]))
def test_zone_stats_match_brute_force(pl, k):
    w = empty_world(network_from_dict(single_intersection()))
    place(w, pl)
    st_ = zone_stats(w, 0, k)
    x, d, q = brute_zone(w, k)
    np.testing.assert_allclose(st_.x, x, atol=0)
    np.testing.assert_allclose(st_.q, q, atol=0)
    np.testing.assert_allclose(st_.d, d, atol=1e-12)
    assert (0 <= st_.q).all() and (st_.q <= st_.x).all()
    assert (0 <= st_.d).all() and (st_.d <= 1).all()


@settings(max_examples=40, deadline=None)
@given(placements)
def test_monotone_in_k_and_capping(pl):
    w = empty_world(network_from_dict(single_intersection()))
    place(w, pl)
    s60, s100, s200 = (zone_stats(w, 0, k) for k in K_VALUES)
    for g in ("x", "q"):
        assert (getattr(s60, g) <= getattr(s100, g)).all()
        assert (getattr(s100, g) <= getattr(s200, g)).all()
    big, whole = zone_stats(w, 0, 300.0), zone_stats(w, 0, 1e6)
    np.testing.assert_array_equal(big.x, whole.x)
    np.testing.assert_array_equal(big.d, whole.d)
    state = build_state(w, 0)
    for k_i in range(3):
        for p in range(8):
            xa = state[0 * 24 + k_i * 8 + p]
            qa = state[2 * 24 + k_i * 8 + p]
            assert qa <= xa


@settings(max_examples=40, deadline=None)
@given(placements, st.integers(1, 8), st.integers(0, 1), st.integers(0, 1), st.integers(0, 2))
def test_moving_a_vehicle_downstream_shifts_pressure(pl, phase, which_up, which_down, lane_in_group):
    row = PHASE_TABLE[phase]
    up = row.upstream_slots[which_up]
    down = row.downstream_groups[which_down][lane_in_group]
    w = empty_world(network_from_dict(single_intersection()))
    vids = place(w, pl + [(up, 10.0, 0.0)])
    before = phase_pressure(zone_stats(w, 0, 60.0), phase, "x")
    v = vids[-1]
    w.veh_lane[v] = w.int_lanes[0, down]
    w.veh_pos[v] = 10.0
    after = phase_pressure(zone_stats(w, 0, 60.0), phase, "x")
    assert after - before == pytest.approx(-(1 + 1 / 3), abs=1e-12)
