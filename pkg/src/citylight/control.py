"""Per-intersection signal controller: all-red transitions and trigger conditions."""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .road_network import PHASE_TABLE, Intersection

ALL_RED_SECONDS = 5
ACTION_PERIOD = 10
K_TRIGGER = 60.0


@dataclass(frozen=True)
class ControllerState:
    current_phase: int = 1
    green_elapsed: int = 0
    all_red_remaining: int = 0
    pending_phase: int | None = None

    @property
    def signal(self) -> int:
        """Active phase, or 0 while all-red."""
        return 0 if self.all_red_remaining > 0 else self.current_phase


class Policy(str, enum.Enum):
    TP1 = "tp1"
    TP2 = "tp2"
    TP3 = "tp3"


_ENABLED = {
    Policy.TP1: (True, False, False, False),
    Policy.TP2: (True, True, False, False),
    Policy.TP3: (True, True, True, True),
}


@dataclass(frozen=True)
class TriggerPolicy:
    kind: Policy = Policy.TP3
    green_max: float = 30.0
    k_trigger: float = K_TRIGGER
    downstream_q_thresh: float = 8.0
    pressure_thresh: float = -5.0
    literal_c3: bool = False  # True: "equals 8" as strict equality

    @classmethod
    def of(cls, name, **kw) -> "TriggerPolicy":
        return cls(Policy(str(name).lower()), **kw)

    @property
    def enabled(self) -> tuple[bool, bool, bool, bool]:
        return _ENABLED[self.kind]


def tick(cs: ControllerState) -> ControllerState:
    if cs.all_red_remaining > 0:
        left = cs.all_red_remaining - 1
        if left == 0:
            return ControllerState(cs.pending_phase, 0, 0, None)
        return replace(cs, all_red_remaining=left)
    return replace(cs, green_elapsed=cs.green_elapsed + 1)


def request_phase(cs: ControllerState, phase: int, inter: Intersection | None = None) -> ControllerState:
    if cs.all_red_remaining > 0:
        raise ValueError("phase request during all-red")
    if phase not in PHASE_TABLE:
        raise ValueError(f"invalid phase {phase!r}")
    if inter is not None and phase not in inter.valid_phases():
        raise ValueError(f"phase {phase} has no existing upstream lane at {inter.id}")
    if phase == cs.current_phase:
        return cs
    return ControllerState(cs.current_phase, cs.green_elapsed, ALL_RED_SECONDS, phase)


def conditions(cs: ControllerState, stats60, policy: TriggerPolicy) -> tuple[bool, bool, bool, bool]:
    """Evaluate conditions C1..C4 for the current phase (regardless of policy)."""
    if stats60.k != policy.k_trigger:
        raise ValueError(f"trigger stats must use k={policy.k_trigger}, got k={stats60.k}")
    row = PHASE_TABLE[cs.current_phase]
    up = list(row.upstream_slots)
    down = list(row.downstream_groups[0] + row.downstream_groups[1])
    q = np.asarray(stats60.q)
    up_q = float(q[up].sum())
    down_q = float(q[down].sum())
    c1 = cs.green_elapsed > policy.green_max
    c2 = up_q == 0.0
    c3 = down_q == policy.downstream_q_thresh if policy.literal_c3 else down_q >= policy.downstream_q_thresh
    c4 = up_q - down_q / 3.0 < policy.pressure_thresh
    return c1, c2, c3, c4


def should_trigger(cs: ControllerState, stats60, policy: TriggerPolicy) -> bool:
    return any(e and c for e, c in zip(policy.enabled, conditions(cs, stats60, policy)))
