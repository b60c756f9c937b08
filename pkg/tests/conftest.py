import json

import numpy as np
import pytest

from citylight.grid import Demand, gen_grid
from citylight.road_network import network_from_dict


def single_intersection(lane_len=300.0, speed=15.0, drop_west=False):
    """Network dict of one signalized intersection 'c' with four (or three) approaches."""
    net, _ = gen_grid(1, 1, lane_len=lane_len, speed_limit=speed, demand=Demand(routes_per_source=1))
    d = net.to_dict()
    if drop_west:
        west_in, west_out = "r_b_0_-1_i_0_0", "r_i_0_0_b_0_-1"
        d["roads"] = [r for r in d["roads"] if r["id"] not in (west_in, west_out)]
        gone = {f"{r}_{m}" for r in (west_in, west_out) for m in range(3)}
        d["lanes"] = [l for l in d["lanes"] if l["id"] not in gone]
        d["intersections"] = [i for i in d["intersections"] if i["id"] != "b_0_-1"]
        for i in d["intersections"]:
            i["lane_table"] = [-1 if x in gone else x for x in i["lane_table"]]
            if i["id"] == "i_0_0":
                # N-right, E-through and S-left all lead west
                for s in (2, 4, 6):
                    i["lane_table"][s] = -1
    return d


@pytest.fixture
def one_net():
    return network_from_dict(single_intersection())


@pytest.fixture
def tee_net():
    return network_from_dict(single_intersection(drop_west=True))


@pytest.fixture
def write_json(tmp_path):
    def _write(name, obj):
        p = tmp_path / name
        p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
        return p

    return _write


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion; repeated in the terminal summary."""

    def _record(name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else "")
        _VERDICTS.append(line)
        print("\n" + line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
