"""Road network model, the 24-slot lane convention and network/flow file IO.

Every signalized intersection carries a lane table of 24 slots::

    upstream    0,1,2 N-in   3,4,5 E-in   6,7,8 S-in   9,10,11 W-in
    downstream 12,13,14 N-out 15,16,17 E-out 18,19,20 S-out 21,22,23 W-out

Within an incoming approach the three slots are (left, through, right); a slot
holding ``-1`` has no lane. Traffic drives on the right, so a vehicle arriving
from approach ``a`` turning left leaves towards approach ``(a + 1) % 4``,
through towards ``(a + 2) % 4`` and right towards ``(a + 3) % 4``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

N_SLOTS = 24
N_PHASES = 8
NORTH, EAST, SOUTH, WEST = range(4)
APPROACH_NAMES = ("north", "east", "south", "west")
LEFT, THROUGH, RIGHT = range(3)
RIGHT_TURN_SLOTS = (2, 5, 8, 11)
JAM_SPACING = 7.5
MIN_LANE_LENGTH = 30.0


class NetworkError(ValueError):
    """Malformed or inconsistent network / flow description."""


def out_approach(approach: int, movement: int) -> int:
    return (approach + movement + 1) % 4


def target_triple(slot: int) -> tuple[int, int, int]:
    """Downstream slots reached by the movement of upstream ``slot``."""
    if not 0 <= slot < 12:
        raise ValueError(f"not an upstream slot: {slot}")
    b = out_approach(slot // 3, slot % 3)
    return (12 + 3 * b, 13 + 3 * b, 14 + 3 * b)


def target_middle(slot: int) -> int:
    return target_triple(slot)[1]


@dataclass(frozen=True)
class PhaseRow:
    phase: int
    upstream_slots: tuple[int, int]
    downstream_groups: tuple[tuple[int, int, int], tuple[int, int, int]]
    serves_two_roads: bool


_PHASE_UPSTREAM = {
    1: (0, 6),
    2: (1, 7),
    3: (3, 9),
    4: (4, 10),
    5: (0, 1),
    6: (3, 4),
    7: (6, 7),
    8: (9, 10),
}

PHASE_TABLE: dict[int, PhaseRow] = {
    p: PhaseRow(p, up, (target_triple(up[0]), target_triple(up[1])), p <= 4)
    for p, up in _PHASE_UPSTREAM.items()
}

# Dense lookups used by the vectorised feature code: rows are phases 1..8.
PHASE_UP = np.array([PHASE_TABLE[p].upstream_slots for p in range(1, 9)], dtype=np.int64)
PHASE_DOWN = np.array(
    [PHASE_TABLE[p].downstream_groups[0] + PHASE_TABLE[p].downstream_groups[1] for p in range(1, 9)],
    dtype=np.int64,
)
# PHASE_PERMIT[0] is the all-red row: right turns only.
PHASE_PERMIT = np.zeros((N_PHASES + 1, 12), dtype=np.bool_)
PHASE_PERMIT[:, list(RIGHT_TURN_SLOTS)] = True
for _p in range(1, 9):
    PHASE_PERMIT[_p, list(_PHASE_UPSTREAM[_p])] = True


def phase_movements(phase: int) -> tuple[tuple[int, int], tuple[tuple[int, int, int], tuple[int, int, int]]]:
    if phase not in PHASE_TABLE:
        raise ValueError(f"phase must be in 1..8, got {phase!r}")
    row = PHASE_TABLE[phase]
    return row.upstream_slots, row.downstream_groups


def phases_with_slot(slot: int) -> list[int]:
    """Phases controlling ``slot``, two-road phase first."""
    return [p for p in range(1, 9) if slot in _PHASE_UPSTREAM[p]]


@dataclass(frozen=True)
class Lane:
    id: str
    length: float
    speed_limit: float
    jam_spacing: float = JAM_SPACING

    @property
    def capacity(self) -> int:
        return max(1, math.floor(self.length / self.jam_spacing))


@dataclass(frozen=True)
class Road:
    id: str
    start: str
    end: str
    lanes: tuple[str, ...]


@dataclass(frozen=True)
class Intersection:
    id: str
    lane_table: tuple[str | int, ...]
    signalized: bool = True

    def slot_exists(self, slot: int) -> bool:
        return self.lane_table[slot] != -1

    def valid_phases(self) -> list[int]:
        """Phases with at least one existing upstream lane."""
        return [p for p in range(1, 9) if any(self.slot_exists(s) for s in _PHASE_UPSTREAM[p])]


@dataclass(frozen=True)
class FlowSpec:
    route: tuple[str, ...]
    start_time: int
    end_time: int
    interval: int

    def spawn_times(self) -> list[int]:
        return list(range(self.start_time, self.end_time + 1, self.interval))


@dataclass
class RoadNetwork:
    lanes: dict[str, Lane]
    roads: dict[str, Road]
    intersections: dict[str, Intersection]
    jam_spacing: float = JAM_SPACING
    # derived lookups, filled by validate()
    lane_road: dict[str, str] = field(default_factory=dict, repr=False, compare=False)

    @property
    def signalized(self) -> list[Intersection]:
        return [i for i in self.intersections.values() if i.signalized]

    def validate(self) -> "RoadNetwork":
        self.lane_road = {}
        for lane in self.lanes.values():
            if not (lane.length >= MIN_LANE_LENGTH and lane.speed_limit > 0):
                raise NetworkError(f"lane {lane.id}: length must be >= {MIN_LANE_LENGTH} m and speed_limit > 0")
        for road in self.roads.values():
            if not road.lanes:
                raise NetworkError(f"road {road.id} has no lanes")
            for node in (road.start, road.end):
                if node not in self.intersections:
                    raise NetworkError(f"road {road.id}: unknown node {node!r}")
            geo = set()
            for lid in road.lanes:
                if lid not in self.lanes:
                    raise NetworkError(f"road {road.id}: dangling lane reference {lid!r}")
                if lid in self.lane_road:
                    raise NetworkError(f"lane {lid} belongs to two roads")
                self.lane_road[lid] = road.id
                geo.add((self.lanes[lid].length, self.lanes[lid].speed_limit))
            if len(geo) != 1:
                raise NetworkError(f"road {road.id}: lanes must share length and speed_limit")
        for inter in self.intersections.values():
            table = inter.lane_table
            if len(table) != N_SLOTS:
                raise NetworkError(f"intersection {inter.id}: lane_table has {len(table)} entries, expected 24")
            if not inter.signalized:
                continue
            for slot, lid in enumerate(table):
                if lid == -1:
                    continue
                if lid not in self.lanes:
                    raise NetworkError(f"intersection {inter.id}: dangling lane reference {lid!r} at slot {slot}")
                road = self.roads[self.lane_road[lid]] if lid in self.lane_road else None
                if road is None:
                    raise NetworkError(f"intersection {inter.id}: lane {lid} is not on any road")
                if slot < 12 and road.end != inter.id:
                    raise NetworkError(f"intersection {inter.id}: slot {slot} lane {lid} does not enter it")
                if slot >= 12 and road.start != inter.id:
                    raise NetworkError(f"intersection {inter.id}: slot {slot} lane {lid} does not leave it")
            for a in range(4):
                inc = [table[3 * a + m] for m in range(3)]
                out = [table[12 + 3 * a + m] for m in range(3)]
                for group, name in ((inc, "in"), (out, "out")):
                    roads = {self.lane_road[x] for x in group if x != -1}
                    if len(roads) > 1:
                        raise NetworkError(f"intersection {inter.id}: {APPROACH_NAMES[a]}-{name} spans several roads")
            for slot in range(12):
                if table[slot] != -1 and all(table[s] == -1 for s in target_triple(slot)):
                    raise NetworkError(f"intersection {inter.id}: slot {slot} leads to a missing approach")
            if not inter.valid_phases():
                raise NetworkError(f"intersection {inter.id}: no controllable upstream lane")
        return self

    # -- queries ---------------------------------------------------------
    def approach_road(self, inter: Intersection, approach: int, outgoing: bool) -> str | None:
        base = 12 + 3 * approach if outgoing else 3 * approach
        for s in range(base, base + 3):
            if inter.lane_table[s] != -1:
                return self.lane_road[inter.lane_table[s]]
        return None

    def movement_slot(self, in_road: str, out_road: str) -> int:
        """Upstream slot at the shared intersection serving ``in_road -> out_road``."""
        a, b = self.roads[in_road], self.roads[out_road]
        if a.end != b.start:
            raise NetworkError(f"roads {in_road} and {out_road} are not connected")
        inter = self.intersections[a.end]
        if not inter.signalized:
            raise NetworkError(f"route passes through unsignalized node {inter.id}")
        ia = ob = None
        for ap in range(4):
            if self.approach_road(inter, ap, outgoing=False) == in_road:
                ia = ap
            if self.approach_road(inter, ap, outgoing=True) == out_road:
                ob = ap
        if ia is None or ob is None:
            raise NetworkError(f"no movement {in_road} -> {out_road} at {inter.id}")
        m = (ob - ia - 1) % 4
        if m > RIGHT:
            raise NetworkError(f"u-turn {in_road} -> {out_road} at {inter.id}")
        slot = 3 * ia + m
        if inter.lane_table[slot] == -1:
            raise NetworkError(f"missing lane for movement {in_road} -> {out_road} at {inter.id}")
        return slot

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "jam_spacing": self.jam_spacing,
            "lanes": [{"id": l.id, "length": l.length, "speed_limit": l.speed_limit} for l in self.lanes.values()],
            "roads": [
                {"id": r.id, "from": r.start, "to": r.end, "lanes": list(r.lanes)} for r in self.roads.values()
            ],
            "intersections": [
                {"id": i.id, "signalized": i.signalized, "lane_table": list(i.lane_table)}
                for i in self.intersections.values()
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def network_from_dict(data: dict) -> RoadNetwork:
    try:
        spacing = float(data.get("jam_spacing", JAM_SPACING))
        lanes = {}
        for d in data["lanes"]:
            lanes[str(d["id"])] = Lane(str(d["id"]), float(d["length"]), float(d["speed_limit"]), spacing)
        roads = {}
        for d in data["roads"]:
            roads[str(d["id"])] = Road(str(d["id"]), str(d["from"]), str(d["to"]), tuple(str(x) for x in d["lanes"]))
        inters = {}
        for d in data["intersections"]:
            table = tuple(-1 if x == -1 else str(x) for x in d.get("lane_table", [-1] * N_SLOTS))
            inters[str(d["id"])] = Intersection(str(d["id"]), table, bool(d.get("signalized", True)))
    except (KeyError, TypeError) as exc:
        raise NetworkError(f"malformed network description: {exc!r}") from exc
    return RoadNetwork(lanes, roads, inters, spacing).validate()


def load_network(path) -> RoadNetwork:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise NetworkError(f"{path}: parse error: {exc}") from exc
    return network_from_dict(data)


def validate_flow(flow: FlowSpec, net: RoadNetwork) -> None:
    if not flow.route:
        raise NetworkError("empty route")
    for rid in flow.route:
        if rid not in net.roads:
            raise NetworkError(f"route references unknown road {rid!r}")
    for a, b in zip(flow.route, flow.route[1:]):
        net.movement_slot(a, b)
    if flow.start_time > flow.end_time or flow.interval < 1:
        raise NetworkError(f"bad schedule {flow.start_time}..{flow.end_time} every {flow.interval}")


def flows_from_list(items: list, net: RoadNetwork) -> list[FlowSpec]:
    flows = []
    for d in items:
        try:
            f = FlowSpec(tuple(str(r) for r in d["route"]), int(d["start_time"]), int(d["end_time"]), int(d["interval"]))
        except (KeyError, TypeError) as exc:
            raise NetworkError(f"malformed flow entry: {exc!r}") from exc
        validate_flow(f, net)
        flows.append(f)
    return flows


def load_flows(path, net: RoadNetwork) -> list[FlowSpec]:
    text = Path(path).read_text().strip()
    if not text:
        return []
    try:
        items = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"{path}: parse error: {exc}") from exc
    return flows_from_list(items, net)


def dump_flows(flows: list[FlowSpec]) -> str:
    return json.dumps(
        [{"route": list(f.route), "start_time": f.start_time, "end_time": f.end_time, "interval": f.interval} for f in flows],
        indent=1,
    )
