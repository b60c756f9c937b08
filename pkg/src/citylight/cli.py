"""Command line entry point: ``citylight {gen-network,run,train,compare,sweep}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import dqn
from .agents import RuleAgent
from .grid import Demand, gen_grid
from .harness import (
    RunConfig,
    build_scenario,
    compare,
    format_matrix,
    make_agent,
    run_episode,
    sweep_matrix,
    write_report,
)
from .road_network import NetworkError, dump_flows
from .rule_agent import RuleParams

log = logging.getLogger("citylight")


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    over = {}
    for key in ("agent", "reward", "policy", "seed", "horizon", "green_max"):
        val = getattr(args, key, None)
        if val is not None:
            over[key] = val
    if getattr(args, "out", None) is not None and args.cmd in ("run", "compare", "sweep"):
        over["out_dir"] = args.out
    cfg = replace(cfg, **over)
    # validate the scenario up front so bad files fail before any work
    build_scenario(cfg)
    return cfg


def cmd_gen_network(args) -> int:
    demand = Demand(horizon=args.horizon, seed=args.seed)
    net, flows = gen_grid(args.rows, args.cols, args.lane_len, demand, speed_limit=args.speed_limit)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "network.json").write_text(net.dumps())
    (out / "flows.json").write_text(dump_flows(flows))
    print(f"wrote {len(net.signalized)} intersections, {len(flows)} flows to {out}")
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    rule = RuleParams(**cfg.rule)
    if args.ensemble:
        cfg = replace(cfg, agent="dqn:" + args.ensemble)
    trace = [] if args.trace else None
    agent = RuleAgent(rule, trace) if cfg.agent in ("rule", "rule_based") else make_agent(cfg.agent, rule)
    trig = [] if args.trigger_log else None
    res = run_episode(cfg, agent, dump_features=args.dump_features, trigger_log=trig)
    if trace is not None:
        _write_rows(args.trace, ["t", "intersection", "layer", "phase"], trace)
    if trig is not None:
        _write_rows(args.trigger_log, ["t", "intersection", "tp1", "tp2", "tp3"], trig)
    print(json.dumps({"agent": res.agent, **res.summary(), "delay": res.metrics.final_delay}))
    return 0


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def cmd_train(args) -> int:
    from .training import train

    cfg = _config(args)
    tcfg = dqn.TrainConfig(seed=args.seed if args.seed is not None else cfg.seed)
    seeds = [int(s) for s in args.scenario_seeds.split(",")] if args.scenario_seeds else None
    net, logs = train(cfg, args.episodes, tcfg, reward=cfg.reward, scenario_seeds=seeds, curve_path=args.curve)
    meta = {"reward": cfg.reward, "policy": cfg.policy, "episodes": len(logs)}
    dqn.save_checkpoint(args.out, net, tcfg, meta)
    last = logs[-1]
    print(f"saved {args.out}: {len(logs)} episodes, last served {last.served}, delay {last.delay:.3f}")
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    rule = RuleParams(**cfg.rule)
    specs = [s for s in args.agents.split(";") if s] if args.agents else ["fixed", "max_pressure", "rule"]
    if args.ensemble:
        specs.append("dqn:" + args.ensemble)
    agents = [make_agent(s, rule) for s in specs]
    report = compare(cfg, agents, workers=args.workers)
    print(report.table())
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    models = {}
    for item in args.models.split(";"):
        reward, _, paths = item.partition("=")
        models[reward] = [dqn.load_checkpoint(p)[0] for p in paths.split(",") if p]
    cells = sweep_matrix(cfg, models)
    table = format_matrix(cells)
    print(table)
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
        (out / "report.md").write_text("# Reward x trigger-policy sweep\n\n" + table + "\n")
        rows = [{"reward": r, "policy": p, "served": s, "delay": d} for (r, p), (s, d) in cells.items()]
        with open(out / "sweep.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["reward", "policy", "served", "delay"])
            w.writeheader()
            w.writerows(rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="citylight", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen-network", help="write a grid network and its flows")
    g.add_argument("--rows", type=int, default=4)
    g.add_argument("--cols", type=int, default=4)
    g.add_argument("--lane-len", type=float, default=300.0)
    g.add_argument("--speed-limit", type=float, default=15.0)
    g.add_argument("--horizon", type=int, default=3600)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_gen_network)

    def common(sp):
        sp.add_argument("--config", help="run config JSON")
        sp.add_argument("--policy", choices=["tp1", "tp2", "tp3"])
        sp.add_argument("--seed", type=int)
        sp.add_argument("--horizon", type=int)
        sp.add_argument("--green-max", dest="green_max", type=float)

    r = sub.add_parser("run", help="simulate one episode")
    common(r)
    r.add_argument("--agent", help="fixed[:green] | max_pressure | rule | dqn:a.ckpt,.. | hybrid:a.ckpt,..")
    r.add_argument("--ensemble", help="comma-separated checkpoints to average")
    r.add_argument("--out", help="run directory")
    r.add_argument("--dump-features", action="store_true", help="write features.csv with the state vectors")
    r.add_argument("--trace", help="rule agent decision trace CSV")
    r.add_argument("--trigger-log", help="per-boundary trigger conditions CSV")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("train", help="train a DQN checkpoint")
    common(t)
    t.add_argument("--reward", choices=["delay", "queue", "dq", "mp", "mp_dq", "twin_dq"])
    t.add_argument("--episodes", type=int, default=100)
    t.add_argument("--scenario-seeds", help="comma-separated scenario seeds cycled over episodes")
    t.add_argument("--curve", help="training curve CSV")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("compare", help="compare agents on one scenario")
    common(c)
    c.add_argument("--agents", help="semicolon-separated agent specs")
    c.add_argument("--ensemble", help="add a DQN ensemble of these checkpoints")
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--out", help="report directory")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("sweep", help="reward x trigger-policy matrix")
    common(s)
    s.add_argument("--models", required=True, help="reward=a.ckpt[,b.ckpt];reward2=...")
    s.add_argument("--out", help="report directory")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (NetworkError, ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"citylight {args.cmd}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
