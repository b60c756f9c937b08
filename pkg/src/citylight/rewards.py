"""Reward functions over zone statistics at consecutive decision steps.

All functions follow "larger is better". They accept a :class:`RewardSnapshot`
whose ``before``/``after`` carry ``x``, ``d``, ``q`` arrays with 24 lane slots
on the last axis, so they work on one intersection or on a stacked batch.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

REWARD_K = 100.0
UP = slice(0, 12)
DOWN = slice(12, 24)


@dataclass(frozen=True)
class RewardSnapshot:
    before: Any
    after: Any
    k: float = REWARD_K

    def __post_init__(self):
        for side in (self.before, self.after):
            if side is not None and getattr(side, "k", self.k) != self.k:
                raise ValueError("snapshot stats must share k")
        if self.before is not None and self.after is not None:
            a = getattr(self.before, "intersection", None)
            b = getattr(self.after, "intersection", None)
            if a != b:
                raise ValueError("snapshot stats must share the intersection")


def _dq(stats, part=slice(None)) -> np.ndarray:
    return (np.asarray(stats.d)[..., part] + np.asarray(stats.q)[..., part]).sum(axis=-1)


def reward_delay(s: RewardSnapshot):
    return -np.asarray(s.after.d).sum(axis=-1)


def reward_queue(s: RewardSnapshot):
    return -np.asarray(s.after.q).sum(axis=-1)


def reward_dq(s: RewardSnapshot):
    return -_dq(s.after)


def reward_mp(s: RewardSnapshot):
    x = np.asarray(s.after.x)
    return -np.abs(x[..., UP].sum(axis=-1) - x[..., DOWN].sum(axis=-1))


def reward_mp_dq(s: RewardSnapshot):
    return -_dq(s.after, UP) + 0.5 * _dq(s.after, DOWN)


def reward_twin_dq(s: RewardSnapshot, absolute: bool = False):
    """Upstream DQ penalty plus the change of downstream DQ since the last decision.

    ``absolute=True`` penalises the magnitude of the change instead of its
    signed value.
    """
    if s.before is None:
        raise ValueError("twin_dq needs the before-snapshot")
    change = _dq(s.after, DOWN) - _dq(s.before, DOWN)
    if absolute:
        change = np.abs(change)
    return -_dq(s.after, UP) - change


REWARDS = {
    "delay": reward_delay,
    "queue": reward_queue,
    "dq": reward_dq,
    "mp": reward_mp,
    "mp_dq": reward_mp_dq,
    "twin_dq": reward_twin_dq,
}


def get_reward(name: str):
    try:
        return REWARDS[name]
    except KeyError:
        raise ValueError(f"unknown reward {name!r}; choose from {sorted(REWARDS)}") from None
