"""Signal-control agents queried by the episode runner."""
from __future__ import annotations

import numpy as np

from . import dqn
from .features import K_VALUES, build_states, phase_features, zone_table
from .rule_agent import RuleParams, decide_traced, density_view, layer1_blocked


class Context:
    """Lazily computed per-boundary observations shared by agents and triggers."""

    def __init__(self, world):
        self.world = world
        self._tables = {}
        self._states = None
        self.rule_cache: dict = {}

    def table(self, k: float):
        if k not in self._tables:
            self._tables[k] = zone_table(self.world, k)
        return self._tables[k]

    @property
    def states(self) -> np.ndarray:
        if self._states is None:
            self._states = build_states(self.world, {k: self.table(k) for k in K_VALUES})
        return self._states


def valid_mask(inter) -> np.ndarray:
    m = np.zeros(8, dtype=bool)
    m[[p - 1 for p in inter.valid_phases()]] = True
    return m


class Agent:
    name = "agent"
    uses_triggers = True
    period = 10

    def reset(self, world) -> None:
        pass

    def decide(self, world, ids: list[int], ctx: Context) -> list[int]:
        raise NotImplementedError


class FixedTimeAgent(Agent):
    """Cycles phases 1-4 (skipping phases without lanes), ``green`` seconds each."""

    uses_triggers = False
    period = 1

    def __init__(self, green: int = 30, cycle=(1, 2, 3, 4)):
        self.green = green
        self.cycle = tuple(cycle)
        self.name = f"fixed_time_{green}s"

    def decide(self, world, ids, ctx):
        out = []
        for i in ids:
            cs = world.controllers[i]
            if cs.green_elapsed < self.green:
                out.append(cs.current_phase)
                continue
            valid = set(world.intersections[i].valid_phases())
            cyc = [p for p in self.cycle if p in valid] or sorted(valid)
            nxt = cyc[(cyc.index(cs.current_phase) + 1) % len(cyc)] if cs.current_phase in cyc else cyc[0]
            out.append(nxt)
        return out


class MaxPressureAgent(Agent):
    """Greedy argmax of the vehicle-count pressure per phase; ties to the lowest phase."""

    def __init__(self, k: float = 100.0):
        self.k = k
        self.name = "max_pressure"

    def decide(self, world, ids, ctx):
        t = ctx.table(self.k)
        _, pres = phase_features(t.x[ids])
        out = []
        for row, i in zip(pres, ids):
            mask = valid_mask(world.intersections[i])
            out.append(int(dqn.masked_argmax(row, mask)) + 1)
        return out


class RuleAgent(Agent):
    def __init__(self, params: RuleParams = RuleParams(), trace: list | None = None):
        self.params = params
        self.trace = trace
        self.name = "rule_based"

    def decide(self, world, ids, ctx):
        out = []
        for i in ids:
            view = density_view(world, i, self.params, ctx.rule_cache)
            phase, layer = decide_traced(view, self.params, world.clock)
            if self.trace is not None:
                self.trace.append((world.clock, world.intersections[i].id, layer, phase))
            out.append(phase)
        return out


class DQNAgent(Agent):
    """Greedy single / ensemble DQN; ``hybrid`` adopts rule layer-1 decisions."""

    def __init__(self, nets: list, hybrid: bool = False, rule_params: RuleParams = RuleParams(), name=None,
                 overrides: list | None = None):
        self.nets = list(nets)
        self.hybrid = hybrid
        self.rule_params = rule_params
        self.overrides = overrides
        if name is None:
            name = "dqn_hybrid" if hybrid else ("dqn_single" if len(self.nets) == 1 else f"dqn_ensemble{len(self.nets)}")
        self.name = name

    def decide(self, world, ids, ctx):
        S = ctx.states[ids]
        q = dqn.ensemble_q(self.nets, S)
        out = []
        for row, i, s in zip(q, ids, S):
            mask = valid_mask(world.intersections[i])
            phase = int(dqn.masked_argmax(row, mask)) + 1
            if self.hybrid:
                rule = layer1_blocked(density_view(world, i, self.rule_params, ctx.rule_cache),
                                      self.rule_params, world.clock)
                if rule is not None and mask[rule - 1]:
                    if self.overrides is not None and rule != phase:
                        self.overrides.append((world.clock, world.intersections[i].id, phase, rule))
                    phase = rule
            out.append(phase)
        return out
