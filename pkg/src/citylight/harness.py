"""Episode runner, agent comparison and run-directory outputs."""
from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dqn
from .agents import Agent, Context, DQNAgent, FixedTimeAgent, MaxPressureAgent, RuleAgent
from .control import ACTION_PERIOD, TriggerPolicy, conditions, should_trigger
from .features import FEATURE_NAMES
from .grid import Demand, gen_grid
from .road_network import dump_flows, load_flows, load_network
from .rule_agent import RuleParams
from .sim import DELAY_THRESHOLD, EpisodeMetrics, SimWorld


@dataclass
class RunConfig:
    network: str | None = None
    flows: str | None = None
    grid: dict = field(default_factory=lambda: {"rows": 4, "cols": 4, "lane_len": 300.0, "speed_limit": 15.0})
    demand: dict = field(default_factory=dict)
    agent: str = "max_pressure"
    reward: str = "twin_dq"
    policy: str = "tp3"
    green_max: float = 30.0
    horizon: int = 3600
    seed: int = 0
    saturation_rate: float = 0.5
    threshold: float = DELAY_THRESHOLD
    out_dir: str | None = None
    rule: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "RunConfig":
        data = json.loads(Path(path).read_text())
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


def build_scenario(cfg: RunConfig):
    if cfg.network:
        net = load_network(cfg.network)
        flows = load_flows(cfg.flows, net) if cfg.flows else []
        return net, flows
    demand = Demand(**{"horizon": cfg.horizon, **cfg.demand, "seed": cfg.seed})
    g = cfg.grid
    return gen_grid(int(g.get("rows", 4)), int(g.get("cols", 4)), float(g.get("lane_len", 300.0)), demand,
                    speed_limit=float(g.get("speed_limit", 15.0)))


def scenario_hash(net, flows) -> str:
    h = hashlib.sha256(net.dumps().encode())
    h.update(dump_flows(flows).encode())
    return h.hexdigest()[:16]


def make_agent(spec: str, rule: RuleParams = RuleParams()) -> Agent:
    """``fixed[:green]``, ``max_pressure``, ``rule``, ``dqn:a.ckpt[,b.ckpt..]``, ``hybrid:a.ckpt,..``."""
    kind, _, arg = spec.partition(":")
    if kind in ("fixed", "fixed_time"):
        return FixedTimeAgent(int(arg) if arg else 30)
    if kind in ("max_pressure", "mp"):
        return MaxPressureAgent()
    if kind in ("rule", "rule_based"):
        return RuleAgent(rule)
    if kind in ("dqn", "hybrid"):
        paths = [p for p in arg.split(",") if p]
        if not paths:
            raise ValueError(f"agent {spec!r} needs checkpoint paths")
        nets = [dqn.load_checkpoint(p)[0] for p in paths]
        return DQNAgent(nets, hybrid=kind == "hybrid", rule_params=rule)
    raise ValueError(f"unknown agent spec {spec!r}")


@dataclass
class EpisodeResult:
    agent: str
    metrics: EpisodeMetrics
    scenario: str
    decisions: int
    decision_seconds: float
    served_total: int

    @property
    def served(self) -> int:
        return self.metrics.served

    def summary(self) -> dict:
        return {"served": self.metrics.served, "terminated_at": self.metrics.terminated_at}


def run_world(world: SimWorld, agent: Agent, policy: TriggerPolicy, horizon: int, trigger_log: list | None = None,
              feature_dump: list | None = None) -> tuple[int, float]:
    """Drive ``world`` with ``agent`` until the horizon or termination; returns (decisions, seconds spent)."""
    agent.reset(world)
    n_dec, spent = 0, 0.0
    n_int = len(world.intersections)
    while world.clock < horizon and not world.terminated:
        t = world.clock
        ids: list[int] = []
        ctx = None
        if agent.uses_triggers:
            if t % ACTION_PERIOD == 0:
                ctx = Context(world)
                t60 = ctx.table(policy.k_trigger)
                for i in range(n_int):
                    cs = world.controllers[i]
                    if cs.all_red_remaining:
                        continue
                    row = t60.row(world, i)
                    if trigger_log is not None:
                        c = conditions(cs, row, policy)
                        trigger_log.append((t, i, c[0], c[0] or c[1], any(c)))
                    if should_trigger(cs, row, policy):
                        ids.append(i)
        elif t % agent.period == 0:
            ids = [i for i in range(n_int) if world.controllers[i].all_red_remaining == 0]
            ctx = Context(world)
        if ids:
            if feature_dump is not None:
                for i in ids:
                    feature_dump.append((t, world.intersections[i].id, ctx.states[i]))
            t0 = time.perf_counter()
            phases = agent.decide(world, ids, ctx)
            spent += time.perf_counter() - t0
            n_dec += len(ids)
            for i, p in zip(ids, phases):
                world.request(i, p)
        world.step()
    return n_dec, spent


def run_episode(cfg: RunConfig, agent: Agent | None = None, out_dir=None, scenario=None,
                trigger_log: list | None = None, dump_features: bool = False) -> EpisodeResult:
    agent = agent or make_agent(cfg.agent, RuleParams(**cfg.rule))
    net, flows = scenario or build_scenario(cfg)
    world = SimWorld(net, flows, seed=cfg.seed, saturation_rate=cfg.saturation_rate, threshold=cfg.threshold)
    policy = TriggerPolicy.of(cfg.policy, green_max=cfg.green_max)
    dump = [] if dump_features else None
    n_dec, spent = run_world(world, agent, policy, cfg.horizon, trigger_log, dump)
    if not world.metrics.samples or world.metrics.samples[-1][0] != world.clock:
        world.evaluate()
    res = EpisodeResult(agent.name, world.metrics, scenario_hash(net, flows), n_dec, spent, world.n_vehicles)
    out_dir = out_dir or cfg.out_dir
    if out_dir:
        write_run(Path(out_dir), cfg, res)
        if dump is not None:
            write_feature_dump(Path(out_dir) / "features.csv", dump)
    return res


def write_run(out: Path, cfg: RunConfig, res: EpisodeResult) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "served", "delay_index"])
        for t, served, d in res.metrics.samples:
            w.writerow([t, served, repr(float(d))])
    (out / "summary.json").write_text(json.dumps(res.summary(), sort_keys=True))
    m = res.metrics
    lines = [f"# Run: {res.agent}", "", f"- scenario: `{res.scenario}`", f"- served: {m.served}",
             f"- final delay index: {m.final_delay:.3f}",
             f"- terminated at: {m.terminated_at if m.terminated_at is not None else 'not terminated'}",
             f"- decisions: {res.decisions}"]
    (out / "report.md").write_text("\n".join(lines) + "\n")


def write_feature_dump(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "intersection", *FEATURE_NAMES])
        for t, iid, s in rows:
            w.writerow([t, iid, *[repr(float(v)) for v in s]])


# -- comparison ----------------------------------------------------------------

@dataclass
class ComparisonReport:
    scenario: str
    rows: list[dict]

    def table(self) -> str:
        lines = ["| agent | served/delay | terminated_at | decisions | mean decision ms |",
                 "|---|---|---|---|---|"]
        for r in self.rows:
            lines.append(f"| {r['agent']} | {r['served']:,}/{r['delay']:.3f} | {r['terminated_at']} | "
                         f"{r['decisions']} | {r['decision_ms']:.3f} |")
        return "\n".join(lines)


def _row(res: EpisodeResult) -> dict:
    return {
        "agent": res.agent,
        "served": res.metrics.served,
        "delay": res.metrics.final_delay,
        "terminated_at": res.metrics.terminated_at,
        "decisions": res.decisions,
        "decision_ms": 1e3 * res.decision_seconds / max(res.decisions, 1),
        "scenario": res.scenario,
    }


def _run_job(job):
    cfg, agent = job
    return run_episode(cfg, agent)


def compare(cfg: RunConfig, agents: list[Agent], out_dir=None, workers: int = 1) -> ComparisonReport:
    if len(agents) < 2:
        raise ValueError("compare needs at least two agents")
    jobs = [(replace(cfg, out_dir=None), a) for a in agents]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    hashes = {r.scenario for r in results}
    if len(hashes) != 1:
        raise RuntimeError("agents saw different scenarios")
    report = ComparisonReport(hashes.pop(), [_row(r) for r in results])
    out_dir = out_dir or cfg.out_dir
    if out_dir:
        write_report(Path(out_dir), cfg, report)
    return report


def write_report(out: Path, cfg: RunConfig, report: ComparisonReport, title: str = "Agent comparison") -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(report.rows[0]))
        w.writeheader()
        w.writerows(report.rows)
    (out / "report.md").write_text(f"# {title}\n\nscenario `{report.scenario}`\n\n{report.table()}\n")


def sweep_matrix(cfg: RunConfig, models: dict[str, list], policies=("tp1", "tp2", "tp3")) -> dict:
    """served/delay for each (reward model, trigger policy) cell."""
    out = {}
    scenario = build_scenario(cfg)
    for reward, nets in models.items():
        for pol in policies:
            res = run_episode(replace(cfg, policy=pol, out_dir=None), DQNAgent(nets, name=f"{reward}/{pol}"),
                              scenario=scenario)
            out[(reward, pol)] = (res.metrics.served, res.metrics.final_delay)
    return out


def format_matrix(cells: dict, policies=("tp1", "tp2", "tp3")) -> str:
    rewards = list(dict.fromkeys(r for r, _ in cells))
    lines = ["| reward | " + " | ".join(p.upper() for p in policies) + " |", "|---" * (len(policies) + 1) + "|"]
    for r in rewards:
        cells_r = [f"{cells[(r, p)][0]:,}/{cells[(r, p)][1]:.3f}" for p in policies]
        lines.append(f"| {r} | " + " | ".join(cells_r) + " |")
    return "\n".join(lines)
