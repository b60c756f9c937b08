"""Synthetic grid networks with ramping boundary demand."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .road_network import (
    JAM_SPACING,
    FlowSpec,
    Intersection,
    Lane,
    Road,
    RoadNetwork,
    validate_flow,
)
from .rng import stream

_DR = (-1, 0, 1, 0)  # north, east, south, west
_DC = (0, 1, 0, -1)


@dataclass(frozen=True)
class Demand:
    """Boundary demand description.

    Each boundary source emits vehicles with a headway that shrinks linearly
    from ``start_headway`` to ``end_headway`` seconds over ``horizon``,
    split into ``segments`` constant-rate pieces.
    """

    horizon: int = 3600
    start_headway: float = 14.0
    end_headway: float = 5.0
    segments: int = 6
    routes_per_source: int = 3
    p_left: float = 0.2
    p_right: float = 0.2
    max_turns: int = 2
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _node(r: int, c: int, rows: int, cols: int) -> str:
    inside = 0 <= r < rows and 0 <= c < cols
    return f"{'i' if inside else 'b'}_{r}_{c}"


def _road_id(a: str, b: str) -> str:
    return f"r_{a}_{b}"


def gen_grid(
    rows: int,
    cols: int,
    lane_len: float = 300.0,
    demand: Demand | None = None,
    speed_limit: float = 15.0,
    jam_spacing: float = JAM_SPACING,
) -> tuple[RoadNetwork, list[FlowSpec]]:
    """Build a ``rows x cols`` signalized grid plus boundary source/sink roads.

    Every intersection has four approaches with three lanes (left, through,
    right) each. Routes start on a boundary entry road, turn at most
    ``demand.max_turns`` times and leave through a boundary exit road.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    demand = demand or Demand()
    lanes: dict[str, Lane] = {}
    roads: dict[str, Road] = {}
    inters: dict[str, Intersection] = {}

    def add_road(a: str, b: str) -> str:
        rid = _road_id(a, b)
        if rid not in roads:
            ids = tuple(f"{rid}_{m}" for m in range(3))
            for lid in ids:
                lanes[lid] = Lane(lid, float(lane_len), float(speed_limit), jam_spacing)
            roads[rid] = Road(rid, a, b, ids)
        return rid

    for r in range(rows):
        for c in range(cols):
            me = _node(r, c, rows, cols)
            table: list = [-1] * 24
            for a in range(4):
                nb = _node(r + _DR[a], c + _DC[a], rows, cols)
                rin = add_road(nb, me)
                rout = add_road(me, nb)
                for m in range(3):
                    table[3 * a + m] = roads[rin].lanes[m]
                    table[12 + 3 * a + m] = roads[rout].lanes[m]
                if nb.startswith("b_") and nb not in inters:
                    inters[nb] = Intersection(nb, tuple([-1] * 24), signalized=False)
            inters[me] = Intersection(me, tuple(table), signalized=True)
    # deterministic ordering independent of construction order
    net = RoadNetwork(
        dict(sorted(lanes.items())), dict(sorted(roads.items())), dict(sorted(inters.items())), jam_spacing
    ).validate()
    return net, _grid_flows(net, rows, cols, demand)


def _grid_flows(net: RoadNetwork, rows: int, cols: int, demand: Demand) -> list[FlowSpec]:
    rng = stream(demand.seed, "demand")
    sources = []
    for r in range(rows):
        for c in range(cols):
            for a in range(4):
                br, bc = r + _DR[a], c + _DC[a]
                if not (0 <= br < rows and 0 <= bc < cols):
                    # vehicles enter (r, c) from boundary side a, heading opposite to a
                    sources.append((br, bc, r, c, (a + 2) % 4))
    flows: list[FlowSpec] = []
    seg_len = demand.horizon // demand.segments
    for br, bc, r, c, heading in sources:
        for _ in range(demand.routes_per_source):
            route = _random_route(rng, rows, cols, br, bc, r, c, heading, demand)
            offset = int(rng.integers(0, 10))
            for s in range(demand.segments):
                frac = s / max(demand.segments - 1, 1)
                headway = demand.start_headway + frac * (demand.end_headway - demand.start_headway)
                interval = max(1, int(round(headway * demand.routes_per_source)))
                start = s * seg_len + offset
                end = min((s + 1) * seg_len - 1, demand.horizon - 1)
                if start > end:
                    continue
                f = FlowSpec(tuple(route), start, end, interval)
                validate_flow(f, net)
                flows.append(f)
    return flows


def _random_route(rng, rows, cols, br, bc, r, c, heading, demand: Demand) -> list[str]:
    prev = _node(br, bc, rows, cols)
    route = []
    turns = 0
    while True:
        here = _node(r, c, rows, cols)
        route.append(_road_id(prev, here))
        if here.startswith("b_"):
            return route
        u = rng.random()
        if turns < demand.max_turns and u < demand.p_left:
            heading = (heading + 3) % 4  # left turn when travelling towards `heading`
            turns += 1
        elif turns < demand.max_turns and u < demand.p_left + demand.p_right:
            heading = (heading + 1) % 4
            turns += 1
        prev, r, c = here, r + _DR[heading], c + _DC[heading]
