"""Density-priority rule controller with a four-layer decision cascade.

Layer 1 releases a lane that has been blocked for too long, layer 2 looks for
a phase whose two lanes are both dense and balanced, layer 3 for two slow
lanes, and layer 4 falls back to the densest lane. Ranks ("orders") run from
1 (highest priority) to 12 over the upstream slots.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import lane_zone
from .road_network import PHASE_TABLE, RIGHT_TURN_SLOTS, phases_with_slot, target_middle

CONTROLLED_SLOTS = tuple(s for s in range(12) if s not in RIGHT_TURN_SLOTS)


def _lerp(a: float, b: float, frac: float) -> float:
    return a + (b - a) * min(max(frac, 0.0), 1.0)


@dataclass(frozen=True)
class RuleParams:
    k_up: float = 100.0
    mu: float = 0.5
    c_block_start: float = 200.0
    c_block_end: float = 300.0
    c_balance_start: tuple[float, ...] = (0.15, 0.2, 0.2, 0.2, 0.25)
    c_balance_end: tuple[float, ...] = (0.13, 0.18, 0.18, 0.18, 0.23)
    c_speed: float = 1.0
    schedule_window: float = 1800.0

    def c_block(self, now: float) -> float:
        return _lerp(self.c_block_start, self.c_block_end, now / self.schedule_window)

    def c_balance(self, rnd: int, now: float) -> float:
        """Balance coefficient of layer-2 round ``rnd`` (0-based)."""
        return _lerp(self.c_balance_start[rnd], self.c_balance_end[rnd], now / self.schedule_window)


def _rank(values: np.ndarray, exists: np.ndarray, descending: bool) -> np.ndarray:
    """1-based ranks; ties go to the lower slot, nonexistent slots rank last."""
    key = np.where(exists, -values if descending else values, np.inf)
    order = np.lexsort((np.arange(len(values)), ~exists, key))
    ranks = np.empty(len(values), dtype=np.int64)
    ranks[order] = np.arange(1, len(values) + 1)
    return ranks


@dataclass
class DensityView:
    alpha_rel: np.ndarray
    blocked_seconds: np.ndarray
    avg_speed: np.ndarray
    exists: np.ndarray
    alpha_up: np.ndarray = None
    alpha_down: np.ndarray = None
    order: np.ndarray = field(init=False)
    speed_order: np.ndarray = field(init=False)

    def __post_init__(self):
        self.exists = np.asarray(self.exists, dtype=bool)
        self.alpha_rel = np.where(self.exists, np.asarray(self.alpha_rel, dtype=np.float64), -np.inf)
        self.blocked_seconds = np.asarray(self.blocked_seconds, dtype=np.float64)
        self.avg_speed = np.asarray(self.avg_speed, dtype=np.float64)
        if self.alpha_up is None:
            self.alpha_up = np.where(self.exists, self.alpha_rel, 0.0)
        self.order = _rank(self.alpha_rel, self.exists, descending=True)
        self.speed_order = _rank(self.avg_speed, self.exists, descending=False)

    def pair(self, phase: int) -> tuple[int, int]:
        """(j_I, j_II): the phase's slots, denser first (ties to the better order)."""
        a, b = PHASE_TABLE[phase].upstream_slots
        if (self.alpha_rel[b], -self.order[b]) > (self.alpha_rel[a], -self.order[a]):
            return b, a
        return a, b

    def both_exist(self, phase: int) -> bool:
        a, b = PHASE_TABLE[phase].upstream_slots
        return bool(self.exists[a] and self.exists[b])


def density_view(world, i: int, params: RuleParams = RuleParams(), cache: dict | None = None) -> DensityView:
    """Densities, priority orders, blocked times and speeds for intersection ``i``."""
    lanes = world.int_lanes[i]
    if cache is not None and "up" in cache:
        up_counts, down_counts = cache["up"], cache["down"]
    else:
        up_counts = lane_zone(world, np.minimum(params.k_up, world.lane_len), True)
        down_counts = lane_zone(world, np.maximum(world.lane_len - params.k_up, 0.0), False)
        if cache is not None:
            cache["up"], cache["down"] = up_counts, down_counts
    xu, _, _, vu = up_counts
    xd = down_counts[0]
    exists = lanes[:12] >= 0
    alpha_up = np.zeros(12)
    avg_speed = np.zeros(12)
    blocked = np.zeros(12)
    for s in range(12):
        l = lanes[s]
        if l < 0:
            continue
        alpha_up[s] = xu[l] / params.k_up
        avg_speed[s] = vu[l] / xu[l] if xu[l] > 0 else world.lane_vmax[l]
        blocked[s] = world.blocked[l]
    alpha_down = np.zeros(12)
    for s in range(12, 24):
        l = lanes[s]
        if l < 0:
            continue
        seg = world.lane_len[l] - params.k_up
        alpha_down[s - 12] = xd[l] / seg if seg > 0 else 0.0
    alpha_rel = np.array([alpha_up[s] - params.mu * alpha_down[target_middle(s) - 12] for s in range(12)])
    return DensityView(alpha_rel, blocked, avg_speed, exists, alpha_up=alpha_up, alpha_down=alpha_down)


def _first(phases, ok) -> int | None:
    for p in phases:
        if ok(p):
            return p
    return None


def layer1_blocked(view: DensityView, params: RuleParams, now: float) -> int | None:
    ctrl = [s for s in CONTROLLED_SLOTS if view.exists[s]]
    ranked = sorted(ctrl, key=lambda s: (-view.blocked_seconds[s], s))
    rounds = ((params.c_block(now), 5, lambda o: o <= 4), (params.c_block(now) + 50.0, 2, lambda o: o == 1))
    for pos, (limit, max_o1, partner_ok) in enumerate(rounds):
        if pos >= len(ranked):
            break
        j = ranked[pos]
        if view.blocked_seconds[j] <= limit or view.order[j] > max_o1:
            continue

        def ok(p, j=j, partner_ok=partner_ok):
            a, b = PHASE_TABLE[p].upstream_slots
            other = b if a == j else a
            return partner_ok(view.order[other])

        hit = _first(phases_with_slot(j), ok)
        if hit is not None:
            return hit
    return None


def _balanced(view: DensityView, phase: int, c_balance: float) -> bool:
    j1, j2 = view.pair(phase)
    return bool(view.alpha_rel[j1] < view.alpha_rel[j2] / c_balance)


def layer2_balanced(view: DensityView, params: RuleParams, now: float) -> int | None:
    anchor = int(np.flatnonzero(view.order == 1)[0])
    anchor_phases = phases_with_slot(anchor) if anchor not in RIGHT_TURN_SLOTS else []
    for rnd, limit in enumerate((2, 3, 4, 5)):
        cb = params.c_balance(rnd, now)

        def ok(p, limit=limit, cb=cb):
            if not view.both_exist(p):
                return False
            a, b = PHASE_TABLE[p].upstream_slots
            other = b if a == anchor else a
            return view.order[other] <= limit and _balanced(view, p, cb)

        hit = _first(anchor_phases, ok)
        if hit is not None:
            return hit
    cb = params.c_balance(4, now)

    def ok5(p):
        if not view.both_exist(p):
            return False
        j1, j2 = view.pair(p)
        return view.order[j1] <= 2 and view.order[j2] <= 3 and _balanced(view, p, cb)

    return _first(range(1, 9), ok5)


def layer3_slow(view: DensityView, params: RuleParams) -> int | None:
    for s_lim, o_lim in ((2, 4), (3, 5)):

        def ok(p, s_lim=s_lim, o_lim=o_lim):
            if not view.both_exist(p):
                return False
            slots = PHASE_TABLE[p].upstream_slots
            return all(
                view.avg_speed[j] < params.c_speed and view.speed_order[j] <= s_lim and view.order[j] <= o_lim
                for j in slots
            )

        hit = _first(range(1, 9), ok)
        if hit is not None:
            return hit
    return None


def layer4_fallback(view: DensityView) -> int:
    for j in np.argsort(view.order, kind="stable"):
        j = int(j)
        if j in RIGHT_TURN_SLOTS or not view.exists[j]:
            continue
        two, one = phases_with_slot(j)
        a, b = PHASE_TABLE[two].upstream_slots
        partner = b if a == j else a
        return two if view.exists[partner] else one
    raise ValueError("intersection has no controllable upstream lane")


def decide_traced(view: DensityView, params: RuleParams, now: float) -> tuple[int, int]:
    """(phase, layer that fired)."""
    p = layer1_blocked(view, params, now)
    if p is not None:
        return p, 1
    p = layer2_balanced(view, params, now)
    if p is not None:
        return p, 2
    p = layer3_slow(view, params)
    if p is not None:
        return p, 3
    return layer4_fallback(view), 4


def decide(world, i: int, params: RuleParams = RuleParams(), now: float | None = None) -> int:
    now = world.clock if now is None else now
    return decide_traced(density_view(world, i, params), params, now)[0]
