import json
from collections import Counter

import pytest

from citylight.grid import Demand, gen_grid
from citylight.road_network import (
    PHASE_TABLE,
    RIGHT_TURN_SLOTS,
    FlowSpec,
    Lane,
    NetworkError,
    load_flows,
    load_network,
    network_from_dict,
    phase_movements,
)

from conftest import single_intersection

# Compass oracle: approach name -> unit vector pointing from the centre towards it.
COMPASS = {"N": (0, 1), "E": (1, 0), "S": (0, -1), "W": (-1, 0)}
IN_BASE = {"N": 0, "E": 3, "S": 6, "W": 9}
OUT_BASE = {"N": 12, "E": 15, "S": 18, "W": 21}


def diagram_exit(approach: str, movement: str) -> str:
    """Exit approach of a movement, by rotating the heading vector (right-hand traffic)."""
    hx, hy = (-COMPASS[approach][0], -COMPASS[approach][1])  # heading towards the centre
    if movement == "left":
        hx, hy = -hy, hx  # rotate +90 degrees
    elif movement == "right":
        hx, hy = hy, -hx
    return next(k for k, v in COMPASS.items() if v == (hx, hy))


def oracle_row(phase_moves):
    ups, downs = [], []
    for appr, mv in phase_moves:
        ups.append(IN_BASE[appr] + ("left", "through", "right").index(mv))
        b = OUT_BASE[diagram_exit(appr, mv)]
        downs.append((b, b + 1, b + 2))
    return tuple(ups), tuple(downs)


DIAGRAM = {
    1: [("N", "left"), ("S", "left")],
    2: [("N", "through"), ("S", "through")],
    3: [("E", "left"), ("W", "left")],
    4: [("E", "through"), ("W", "through")],
    5: [("N", "left"), ("N", "through")],
    6: [("E", "left"), ("E", "through")],
    7: [("S", "left"), ("S", "through")],
    8: [("W", "left"), ("W", "through")],
}


@pytest.mark.parametrize("phase", range(1, 9))
def test_phase_table_matches_diagram(phase):
    assert phase_movements(phase) == oracle_row(DIAGRAM[phase])


def test_phase_examples():
    assert phase_movements(1) == ((0, 6), ((15, 16, 17), (21, 22, 23)))
    assert phase_movements(2) == ((1, 7), ((18, 19, 20), (12, 13, 14)))
    assert PHASE_TABLE[5].upstream_slots == (0, 1)
    assert not PHASE_TABLE[5].serves_two_roads
    assert all(PHASE_TABLE[p].serves_two_roads for p in range(1, 5))
    assert not any(PHASE_TABLE[p].serves_two_roads for p in range(5, 9))


@pytest.mark.parametrize("bad", [0, 9, -1])
def test_phase_out_of_range(bad):
    with pytest.raises(ValueError):
        phase_movements(bad)


def test_slot_multiplicities():
    c = Counter(s for p in range(1, 9) for s in PHASE_TABLE[p].upstream_slots)
    assert set(c) == {0, 1, 3, 4, 6, 7, 9, 10}
    assert set(c.values()) == {2}
    assert not set(RIGHT_TURN_SLOTS) & set(c)
    for p in range(1, 9):
        for g in PHASE_TABLE[p].downstream_groups:
            assert len(g) == 3 and g[0] >= 12 and g[2] == g[0] + 2


def test_load_grid_roundtrip(write_json):
    net, _ = gen_grid(2, 2)
    path = write_json("net.json", net.dumps())
    loaded = load_network(path)
    assert len(loaded.signalized) == 4
    for inter in loaded.signalized:
        assert len(inter.lane_table) == 24
        assert all(x == -1 or x in loaded.lanes for x in inter.lane_table)
    assert loaded == net
    assert network_from_dict(json.loads(loaded.dumps())) == loaded


def test_lane_table_length_rejected(write_json):
    d = single_intersection()
    inter = [i for i in d["intersections"] if i["signalized"]][0]
    inter["lane_table"] = inter["lane_table"] + [-1]
    with pytest.raises(NetworkError, match="25 entries"):
        load_network(write_json("bad.json", d))


def test_parse_error(write_json):
    with pytest.raises(NetworkError, match="parse error"):
        load_network(write_json("bad.json", "{not json"))


def test_dangling_lane_rejected(write_json):
    d = single_intersection()
    inter = [i for i in d["intersections"] if i["signalized"]][0]
    inter["lane_table"][0] = "nope"
    with pytest.raises(NetworkError, match="dangling"):
        load_network(write_json("bad.json", d))


def test_nonpositive_length_rejected():
    d = single_intersection()
    d["lanes"][0]["length"] = 0
    with pytest.raises(NetworkError):
        network_from_dict(d)


def test_three_leg_west_absent(tee_net):
    inter = tee_net.intersections["i_0_0"]
    for s in (9, 10, 11, 21, 22, 23):
        assert inter.lane_table[s] == -1
    assert 8 not in inter.valid_phases()


def test_lane_capacity():
    assert Lane("a", 300.0, 15.0).capacity == 40
    assert Lane("b", 30.0, 15.0).capacity == 4
    assert Lane("c", 7.0, 15.0).capacity == 1


def test_flow_spawn_times():
    assert FlowSpec(("a",), 0, 100, 10).spawn_times() == list(range(0, 101, 10))


def test_load_flows(one_net, write_json):
    assert load_flows(write_json("empty.json", ""), one_net) == []
    assert load_flows(write_json("empty2.json", []), one_net) == []
    good = [{"route": ["r_b_-1_0_i_0_0", "r_i_0_0_b_1_0"], "start_time": 0, "end_time": 100, "interval": 10}]
    flows = load_flows(write_json("f.json", good), one_net)
    assert len(flows[0].spawn_times()) == 11
    bad = [{"route": ["r_b_-1_0_i_0_0", "ghost"], "start_time": 0, "end_time": 1, "interval": 1}]
    with pytest.raises(NetworkError, match="unknown road"):
        load_flows(write_json("g.json", bad), one_net)
    disconnected = [{"route": ["r_b_-1_0_i_0_0", "r_b_0_1_i_0_0"], "start_time": 0, "end_time": 1, "interval": 1}]
    with pytest.raises(NetworkError):
        load_flows(write_json("h.json", disconnected), one_net)


def test_gen_grid_shapes_and_determinism():
    net1, _ = gen_grid(1, 1)
    assert len(net1.signalized) == 1
    inter = net1.signalized[0]
    assert all(x != -1 for x in inter.lane_table)
    net4, flows4 = gen_grid(4, 4, demand=Demand(seed=3))
    assert len(net4.signalized) == 16
    again, flows_again = gen_grid(4, 4, demand=Demand(seed=3))
    assert net4.dumps() == again.dumps()
    assert flows4 == flows_again
    _, other = gen_grid(4, 4, demand=Demand(seed=4))
    assert other != flows4
    with pytest.raises(ValueError):
        gen_grid(0, 3)


def test_min_lane_length_rejected():
    with pytest.raises(NetworkError):
        gen_grid(1, 1, lane_len=20.0)
