"""Double-DQN training on simulated episodes with one network shared by all intersections."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import dqn
from .agents import Context, valid_mask
from .control import ACTION_PERIOD, TriggerPolicy, should_trigger
from .features import STATE_DIM, state_scale
from .harness import RunConfig, build_scenario
from .rewards import REWARD_K, RewardSnapshot, get_reward
from .rng import stream
from .sim import SimWorld

log = logging.getLogger(__name__)


@dataclass
class EpisodeLog:
    episode: int
    served: int
    delay: float
    terminated_at: int | None
    mean_loss: float
    epsilon: float
    seconds: float


def _collect(world, ctx, pending, buffer, reward_fn, ids, masks):
    """Close the open transition of every triggered intersection."""
    t100 = ctx.table(REWARD_K)
    for i in ids:
        if pending[i] is None:
            continue
        s0, a0, before = pending[i]
        after = t100.row(world, i)
        r = float(reward_fn(RewardSnapshot(before, after, REWARD_K)))
        buffer.add(s0, a0, r, ctx.states[i], masks[i], False)


def train(
    run: RunConfig,
    episodes: int,
    cfg: dqn.TrainConfig = dqn.TrainConfig(),
    reward: str | None = None,
    scenario_seeds=None,
    net: dqn.QNetwork | None = None,
    curve_path=None,
    time_budget: float | None = None,
    stop_on_threshold: bool = False,
    per_decision_updates: bool = True,
) -> tuple[dqn.QNetwork, list[EpisodeLog]]:
    """Train a shared Q-network; returns it with a per-episode log.

    Episode ``e`` simulates the scenario built from ``scenario_seeds[e % n]``
    (default: ``run.seed``). Decisions follow the run's trigger policy with
    ``cfg.green_sec`` as the maximum green. Episodes run to the horizon
    unless ``stop_on_threshold``, so late congested states are visited too.
    """
    reward_fn = get_reward(reward or run.reward)
    rng = stream(cfg.seed, "agent")
    net = net or dqn.QNetwork.init(STATE_DIM, cfg.hidden, rng=stream(cfg.seed, "init"), input_scale=state_scale())
    trainer = dqn.Trainer(net, cfg)
    buffer = dqn.ReplayBuffer(cfg.replay_capacity, STATE_DIM)
    policy = TriggerPolicy.of(run.policy, green_max=cfg.green_sec)
    seeds = list(scenario_seeds) if scenario_seeds is not None else [run.seed]
    scenarios = {}
    logs: list[EpisodeLog] = []
    eps = cfg.epsilon
    start = time.perf_counter()
    for ep in range(episodes):
        t0 = time.perf_counter()
        seed = seeds[ep % len(seeds)]
        if seed not in scenarios:
            scenarios[seed] = build_scenario(replace(run, seed=seed))
        net_, flows = scenarios[seed]
        world = SimWorld(net_, flows, seed=seed, saturation_rate=run.saturation_rate, threshold=run.threshold)
        n_int = len(world.intersections)
        masks = [valid_mask(x) for x in world.intersections]
        pending = [None] * n_int
        losses = []
        while world.clock < run.horizon and not (stop_on_threshold and world.terminated):
            if world.clock % ACTION_PERIOD == 0:
                ctx = Context(world)
                t60 = ctx.table(policy.k_trigger)
                ids = [i for i in range(n_int) if not world.controllers[i].all_red_remaining
                       and should_trigger(world.controllers[i], t60.row(world, i), policy)]
                if ids:
                    _collect(world, ctx, pending, buffer, reward_fn, ids, masks)
                    S = ctx.states[ids]
                    q, _ = dqn.forward(trainer.net, S)
                    t100 = ctx.table(REWARD_K)
                    for row, i, s in zip(q, ids, S):
                        if rng.random() < eps:
                            valid = np.flatnonzero(masks[i])
                            a = int(valid[rng.integers(valid.size)]) + 1
                        else:
                            a = int(dqn.masked_argmax(row, masks[i])) + 1
                        pending[i] = (s, a, t100.row(world, i))
                        world.request(i, a)
                    if len(buffer) >= cfg.batch_size:
                        n_up = len(ids) if per_decision_updates else 1
                        for _ in range(cfg.model_update_freq * n_up):
                            ql, rl = trainer.train_step(buffer.sample(cfg.batch_size, rng))
                            losses.append(ql + rl)
            world.step()
        if not world.metrics.samples or world.metrics.samples[-1][0] != world.clock:
            world.evaluate()
        m = world.metrics
        entry = EpisodeLog(ep, m.served, m.final_delay, m.terminated_at,
                           float(np.mean(losses)) if losses else float("nan"), eps, time.perf_counter() - t0)
        logs.append(entry)
        log.info("episode %d served=%d delay=%.3f end=%s loss=%.4f eps=%.3f", ep, entry.served, entry.delay,
                 entry.terminated_at, entry.mean_loss, eps)
        eps = max(cfg.epsilon_min, eps * cfg.epsilon_decay)
        if time_budget is not None and time.perf_counter() - start > time_budget:
            break
    if curve_path:
        write_curve(curve_path, logs)
    return trainer.net, logs


def write_curve(path, logs: list[EpisodeLog]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "served", "delay", "terminated_at", "mean_loss"])
        for e in logs:
            w.writerow([e.episode, e.served, f"{e.delay:.6f}", e.terminated_at if e.terminated_at is not None else "",
                        f"{e.mean_loss:.6f}"])
