"""Deterministic 1 s point-queue traffic simulator.

Vehicles travel at their lane's speed limit until they reach the back of the
stop-line queue, where they stop (speed 0). Each permitted upstream lane
discharges its queue head at ``saturation_rate`` vehicles per second into the
next lane of the vehicle's route, provided that lane has room. All mutable
state is held in flat numpy arrays consumed by :mod:`citylight.kernels`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .control import ControllerState, request_phase, tick
from .road_network import PHASE_PERMIT, FlowSpec, RoadNetwork

DELAY_THRESHOLD = 1.40
EVAL_PERIOD = 20
PENDING, ACTIVE, SERVED = 0, kernels.ACTIVE, kernels.SERVED


@dataclass(frozen=True)
class Vehicle:
    id: int
    route: tuple[str, ...]
    lane: str | None
    lane_pos: float
    speed: float
    depart_time: float
    freeflow_trip_time: float
    remaining_freeflow: float
    status: str
    arrive_time: float | None = None


def vehicle_delay_index(v: Vehicle, now: float) -> float:
    """Trip delay index: (elapsed + remaining free-flow time) / free-flow trip time."""
    if v.status == "pending" or now < v.depart_time:
        raise ValueError(f"vehicle {v.id} has not departed at t={now}")
    if v.status == "served":
        return (v.arrive_time - v.depart_time) / v.freeflow_trip_time
    return ((now - v.depart_time) + v.remaining_freeflow) / v.freeflow_trip_time


@dataclass
class EpisodeMetrics:
    served: int = 0
    samples: list[tuple[int, int, float]] = field(default_factory=list)  # (t, served, delay_index)
    terminated_at: int | None = None
    threshold: float = DELAY_THRESHOLD

    @property
    def delay_index(self) -> list[float]:
        return [s[2] for s in self.samples]

    @property
    def final_delay(self) -> float:
        return self.samples[-1][2] if self.samples else 1.0


class SimWorld:
    def __init__(
        self,
        net: RoadNetwork,
        flows: list[FlowSpec],
        seed: int = 0,
        saturation_rate: float = 0.5,
        threshold: float = DELAY_THRESHOLD,
    ):
        self.net = net
        self.flows = list(flows)
        self.rng_seed = seed
        self.saturation_rate = float(saturation_rate)
        self.clock = 0
        self.metrics = EpisodeMetrics(threshold=threshold)
        self.served_count = 0
        self._index_network()
        self._expand_flows()
        self.controllers = [ControllerState(i.valid_phases()[0]) for i in self.intersections]
        self.signal = np.array([c.signal for c in self.controllers], dtype=np.int64)

    # -- construction ------------------------------------------------------
    def _index_network(self) -> None:
        net = self.net
        self.lane_ids = list(net.lanes)
        self.lane_index = {lid: n for n, lid in enumerate(self.lane_ids)}
        self.road_ids = list(net.roads)
        self.road_index = {rid: n for n, rid in enumerate(self.road_ids)}
        self.intersections = net.signalized
        self.int_index = {i.id: n for n, i in enumerate(self.intersections)}
        lanes = [net.lanes[l] for l in self.lane_ids]
        self.lane_len = np.array([l.length for l in lanes], dtype=np.float64)
        self.lane_vmax = np.array([l.speed_limit for l in lanes], dtype=np.float64)
        self.lane_cap = np.array([l.capacity for l in lanes], dtype=np.int64)
        self.spacing = float(net.jam_spacing)
        n_lanes = len(lanes)
        width = max(len(r.lanes) for r in net.roads.values())
        self.road_lanes = np.full((len(self.road_ids), width), -1, dtype=np.int64)
        for rid, r in net.roads.items():
            for m, lid in enumerate(r.lanes):
                self.road_lanes[self.road_index[rid], m] = self.lane_index[lid]
        self.int_lanes = np.full((len(self.intersections), 24), -1, dtype=np.int64)
        # lane -> (downstream intersection, slot) for signal gating
        self.lane_down_int = np.full(n_lanes, -1, dtype=np.int64)
        self.lane_down_slot = np.full(n_lanes, -1, dtype=np.int64)
        for n, inter in enumerate(self.intersections):
            for s, lid in enumerate(inter.lane_table):
                if lid != -1:
                    self.int_lanes[n, s] = self.lane_index[lid]
                    if s < 12:
                        self.lane_down_int[self.lane_index[lid]] = n
                        self.lane_down_slot[self.lane_index[lid]] = s
        cap = int(self.lane_cap.max())
        self.buf = np.full((n_lanes, cap), -1, dtype=np.int64)
        self.head = np.zeros(n_lanes, dtype=np.int64)
        self.cnt = np.zeros(n_lanes, dtype=np.int64)
        self.nq = np.zeros(n_lanes, dtype=np.int64)
        self.credit = np.zeros(n_lanes, dtype=np.float64)
        self.blocked = np.zeros(n_lanes, dtype=np.int64)
        self.moved = np.zeros(n_lanes, dtype=np.int64)

    def _expand_flows(self) -> None:
        net = self.net
        route_lane, route_road, ff_after = [], [], []
        flow_start, flow_len, flow_ff = [], [], []
        for f in self.flows:
            flow_start.append(len(route_lane))
            flow_len.append(len(f.route))
            roads = [net.roads[r] for r in f.route]
            ff = [net.lanes[r.lanes[0]].length / net.lanes[r.lanes[0]].speed_limit for r in roads]
            for i, rid in enumerate(f.route):
                if i + 1 < len(f.route):
                    slot = net.movement_slot(rid, f.route[i + 1])
                    lid = net.intersections[net.roads[rid].end].lane_table[slot]
                    route_lane.append(self.lane_index[lid])
                else:
                    route_lane.append(-1)
                route_road.append(self.road_index[rid])
                ff_after.append(float(sum(ff[i + 1:])))
            flow_ff.append(float(sum(ff)))
        self.route_lane = np.array(route_lane, dtype=np.int64)
        self.route_road = np.array(route_road, dtype=np.int64)
        self.route_ff_after = np.array(ff_after, dtype=np.float64)

        veh_flow, veh_time = [], []
        for fi, f in enumerate(self.flows):
            for t in f.spawn_times():
                veh_flow.append(fi)
                veh_time.append(t)
        veh_flow = np.array(veh_flow, dtype=np.int64)
        veh_time = np.array(veh_time, dtype=np.int64)
        order = np.lexsort((veh_flow, veh_time))
        # vehicle ids are assigned in schedule order
        self.veh_flow = veh_flow[order]
        self.spawn_time = veh_time[order]
        n = self.veh_flow.size
        self.n_vehicles = n
        fs = np.array(flow_start, dtype=np.int64)
        fl = np.array(flow_len, dtype=np.int64)
        fff = np.array(flow_ff, dtype=np.float64)
        self.veh_rstart = fs[self.veh_flow] if n else np.zeros(0, np.int64)
        self.veh_rlen = fl[self.veh_flow] if n else np.zeros(0, np.int64)
        self.veh_ff = fff[self.veh_flow] if n else np.zeros(0)
        self.veh_depart = self.spawn_time.astype(np.float64)
        self.veh_lane = np.full(n, -1, dtype=np.int64)
        self.veh_pos = np.zeros(n)
        self.veh_speed = np.zeros(n)
        self.veh_ridx = np.zeros(n, dtype=np.int64)
        self.veh_status = np.zeros(n, dtype=np.int64)
        self.veh_arrive = np.full(n, -1.0)
        self.spawn_order = np.arange(n, dtype=np.int64)
        self.spawn_ptr = 0
        self.waiting = np.zeros(n, dtype=np.int64)
        self.n_waiting = 0

    # -- signal control ----------------------------------------------------
    def request(self, i: int, phase: int) -> None:
        self.controllers[i] = request_phase(self.controllers[i], phase, self.intersections[i])
        self.signal[i] = self.controllers[i].signal

    # -- dynamics ------------------------------------------------------------
    def step(self) -> "SimWorld":
        now = self.clock
        self.spawn_ptr, self.n_waiting = kernels.spawn(
            now, self.spawn_order, self.spawn_time, self.spawn_ptr, self.waiting, self.n_waiting,
            self.route_lane, self.route_road, self.road_lanes, self.veh_rstart, self.buf, self.head,
            self.cnt, self.lane_cap, self.lane_vmax, self.veh_lane, self.veh_pos, self.veh_speed,
            self.veh_status,
        )
        served = kernels.advance_lanes(
            self.buf, self.head, self.cnt, self.nq, self.lane_len, self.lane_vmax, self.spacing,
            self.veh_pos, self.veh_speed, self.veh_ridx, self.veh_rlen, self.veh_status, self.veh_arrive, now,
        )
        served += kernels.discharge(
            self.int_lanes, self.signal, PHASE_PERMIT, self.saturation_rate, self.credit, self.blocked,
            self.buf, self.head, self.cnt, self.nq, self.lane_cap, self.lane_vmax, self.road_lanes,
            self.route_lane, self.route_road, self.veh_lane, self.veh_pos, self.veh_speed, self.veh_ridx,
            self.veh_rstart, self.veh_rlen, self.veh_status, self.veh_arrive, now, self.moved,
        )
        self.served_count += int(served)
        for n, cs in enumerate(self.controllers):
            nxt = tick(cs)
            self.controllers[n] = nxt
            self.signal[n] = nxt.signal
        self.clock = now + 1
        if self.clock % EVAL_PERIOD == 0:
            self.evaluate()
        return self

    # -- metrics -------------------------------------------------------------
    def remaining_freeflow(self, vids: np.ndarray) -> np.ndarray:
        lanes = self.veh_lane[vids]
        cur = (self.lane_len[lanes] - self.veh_pos[vids]) / self.lane_vmax[lanes]
        return cur + self.route_ff_after[self.veh_rstart[vids] + self.veh_ridx[vids]]

    def vehicle_delay_indices(self) -> np.ndarray:
        """Delay index of every departed vehicle (active and served)."""
        act = np.flatnonzero(self.veh_status == ACTIVE)
        srv = np.flatnonzero(self.veh_status == SERVED)
        a = ((self.clock - self.veh_depart[act]) + self.remaining_freeflow(act)) / self.veh_ff[act]
        s = (self.veh_arrive[srv] - self.veh_depart[srv]) / self.veh_ff[srv]
        # >= 1 holds exactly in the model; clip float rounding only
        return np.maximum(np.concatenate([a, s]), 1.0)

    def delay_index(self) -> float:
        d = self.vehicle_delay_indices()
        return float(d.mean()) if d.size else 1.0

    def evaluate(self) -> EpisodeMetrics:
        m = self.metrics
        sample = self.delay_index()
        m.samples.append((self.clock, self.served_count, sample))
        m.served = self.served_count
        if m.terminated_at is None and sample >= m.threshold:
            m.terminated_at = self.clock
        return m

    @property
    def terminated(self) -> bool:
        return self.metrics.terminated_at is not None

    def vehicle(self, vid: int) -> Vehicle:
        st = int(self.veh_status[vid])
        f = self.flows[self.veh_flow[vid]]
        lane = self.lane_ids[self.veh_lane[vid]] if st == ACTIVE else None
        rem = float(self.remaining_freeflow(np.array([vid]))[0]) if st == ACTIVE else 0.0
        return Vehicle(
            id=int(vid), route=f.route[self.veh_ridx[vid]:], lane=lane, lane_pos=float(self.veh_pos[vid]),
            speed=float(self.veh_speed[vid]), depart_time=float(self.veh_depart[vid]),
            freeflow_trip_time=float(self.veh_ff[vid]), remaining_freeflow=rem,
            status=("pending", "active", "served")[st],
            arrive_time=float(self.veh_arrive[vid]) if st == SERVED else None,
        )

    # -- bookkeeping used by tests and reports --------------------------------
    @property
    def spawned_count(self) -> int:
        return int(self.spawn_ptr)

    @property
    def active_count(self) -> int:
        return int((self.veh_status == ACTIVE).sum())

    @property
    def deferred_count(self) -> int:
        return int(self.n_waiting)

    def lane_speed_limit(self, lane: int) -> float:
        return float(self.lane_vmax[lane])


def run_steps(world: SimWorld, n: int) -> SimWorld:
    for _ in range(n):
        world.step()
    return world
