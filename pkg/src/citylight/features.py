"""Zone-of-influence lane statistics and the 154-dim DQN state.

Zone of influence: the part of each lane whose distance to the intersection
is below ``min(k, lane length)``. Upstream lanes measure that distance from
their stop line (lane end), downstream lanes from their entry.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .road_network import PHASE_DOWN, PHASE_UP

K_VALUES = (60.0, 100.0, 200.0)
GROUPS = ("x", "d", "q", "x_pressure", "d_pressure", "q_pressure")
N_STATS = len(GROUPS) * len(K_VALUES) * 8
STATE_DIM = N_STATS + 8 + 2
TIME_NORM = 3600.0
DURATION_NORM = 30.0

# column names in state order: group-major, then k, then phase
FEATURE_NAMES = tuple(
    [f"{g}_k{int(k)}_p{p}" for g in GROUPS for k in K_VALUES for p in range(1, 9)]
    + [f"phase_{p}" for p in range(1, 9)]
    + ["time_norm", "duration_norm"]
)


def vehicle_delay(speed: float, speed_limit: float) -> float:
    return 1.0 - speed / speed_limit


def vehicle_queue_status(speed: float) -> int:
    return int(speed < 0.3)


@dataclass(frozen=True)
class ZoneStats:
    intersection: str
    k: float
    x: np.ndarray
    d: np.ndarray
    q: np.ndarray


@dataclass(frozen=True)
class ZoneTable:
    """Zone statistics of every signalized intersection for one ``k``; arrays are (n, 24)."""

    k: float
    x: np.ndarray
    d: np.ndarray
    q: np.ndarray

    def row(self, world, i: int) -> ZoneStats:
        return ZoneStats(world.intersections[i].id, self.k, self.x[i], self.d[i], self.q[i])


def _gather(lane_vals: np.ndarray, lanes: np.ndarray) -> np.ndarray:
    return np.where(lanes >= 0, lane_vals[np.maximum(lanes, 0)], 0.0)


def lane_zone(world, thresh: np.ndarray, from_end: bool):
    return kernels.zone_counts(
        world.veh_lane, world.veh_pos, world.veh_speed, world.veh_status,
        world.lane_len, world.lane_vmax, thresh, from_end,
    )


def zone_table(world, k: float) -> ZoneTable:
    thresh = np.minimum(float(k), world.lane_len)
    xu, qu, du, _ = lane_zone(world, thresh, True)
    xd, qd, dd, _ = lane_zone(world, thresh, False)
    up, down = world.int_lanes[:, :12], world.int_lanes[:, 12:]
    x = np.concatenate([_gather(xu, up), _gather(xd, down)], axis=1)
    q = np.concatenate([_gather(qu, up), _gather(qd, down)], axis=1)
    dsum = np.concatenate([_gather(du, up), _gather(dd, down)], axis=1)
    d = np.divide(dsum, x, out=np.zeros_like(dsum), where=x > 0)
    return ZoneTable(float(k), x, d, q)


def zone_stats(world, i: int, k: float) -> ZoneStats:
    if k <= 0:
        raise ValueError("k must be positive")
    return zone_table(world, k).row(world, i)


def phase_aggregate(stats, phase: int, group: str) -> float:
    vals = np.asarray(getattr(stats, group))
    return float(vals[..., PHASE_UP[phase - 1]].sum(axis=-1))


def phase_pressure(stats, phase: int, group: str) -> float:
    vals = np.asarray(getattr(stats, group))
    up = vals[..., PHASE_UP[phase - 1]].sum(axis=-1)
    down = vals[..., PHASE_DOWN[phase - 1]].sum(axis=-1)
    return float(up - down / 3.0)


def phase_features(vals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-phase upstream sums and pressures for (n, 24) lane values -> two (n, 8) arrays."""
    agg = vals[:, PHASE_UP].sum(axis=2)
    down = vals[:, PHASE_DOWN].sum(axis=2)
    return agg, agg - down / 3.0


def build_states(world, tables: dict[float, ZoneTable] | None = None) -> np.ndarray:
    """State vectors for all signalized intersections, shape (n, 154)."""
    tables = tables or {k: zone_table(world, k) for k in K_VALUES}
    n = len(world.intersections)
    blocks = {g: [] for g in GROUPS}
    for k in K_VALUES:
        t = tables[k]
        for g in ("x", "d", "q"):
            agg, pres = phase_features(getattr(t, g))
            blocks[g].append(agg)
            blocks[f"{g}_pressure"].append(pres)
    stats = np.concatenate([b for g in GROUPS for b in blocks[g]], axis=1)
    onehot = np.zeros((n, 8))
    green = np.zeros(n)
    for i, cs in enumerate(world.controllers):
        onehot[i, cs.current_phase - 1] = 1.0
        green[i] = cs.green_elapsed
    return np.concatenate(
        [stats, onehot, np.full((n, 1), world.clock / TIME_NORM), (green / DURATION_NORM)[:, None]], axis=1
    )


def build_state(world, i: int) -> np.ndarray:
    return build_states(world)[i]


def state_scale(jam_spacing: float = 7.5) -> np.ndarray:
    """Fixed input normalisation: counts relative to the two-lane zone capacity, delays halved."""
    scale = []
    for g in GROUPS:
        for k in K_VALUES:
            scale += [0.5 if g.startswith("d") else jam_spacing / (2.0 * k)] * 8
    return np.array(scale + [1.0] * 10)
