"""Time the simulation kernels and a full episode under both backends.

Each backend runs in its own interpreter because the choice is made at import
time from CITYLIGHT_NUMBA. Usage:

    python3 benchmarks/bench_kernels.py [--steps 1800] [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import json, sys, time
import numpy as np
from citylight import BACKEND, kernels
from citylight.agents import MaxPressureAgent
from citylight.control import TriggerPolicy
from citylight.grid import Demand, gen_grid
from citylight.harness import run_world
from citylight.sim import SimWorld

steps, repeat = int(sys.argv[1]), int(sys.argv[2])
net, flows = gen_grid(4, 4, demand=Demand(horizon=steps, seed=0))


def episode():
    w = SimWorld(net, flows, seed=0)
    run_world(w, MaxPressureAgent(), TriggerPolicy.of("tp3"), steps)
    return w


t0 = time.perf_counter()
w = episode()  # includes JIT compilation (or cache load) on the numba path
first = time.perf_counter() - t0
best = float("inf")
for _ in range(repeat):
    t0 = time.perf_counter()
    episode()
    best = min(best, time.perf_counter() - t0)

# micro: zone counts and lane advance on the final state
thresh = np.minimum(100.0, w.lane_len)
args = (w.veh_lane, w.veh_pos, w.veh_speed, w.veh_status, w.lane_len, w.lane_vmax, thresh, True)
kernels.zone_counts(*args)
n = 200
t0 = time.perf_counter()
for _ in range(n):
    kernels.zone_counts(*args)
zone_us = (time.perf_counter() - t0) / n * 1e6

adv = [w.buf.copy(), w.head.copy(), w.cnt.copy(), w.nq.copy()]
veh = [w.veh_pos.copy(), w.veh_speed.copy(), w.veh_ridx.copy()]
t0 = time.perf_counter()
for _ in range(n):
    b, h, c, q = (a.copy() for a in adv)
    p, s, r = (a.copy() for a in veh)
    kernels.advance_lanes(b, h, c, q, w.lane_len, w.lane_vmax, w.spacing, p, s, r, w.veh_rlen,
                          w.veh_status.copy(), w.veh_arrive.copy(), steps)
adv_us = (time.perf_counter() - t0) / n * 1e6

print(json.dumps({"backend": BACKEND, "first_episode_s": first, "episode_s": best,
                  "zone_counts_us": zone_us, "advance_lanes_us": adv_us,
                  "served": int(w.metrics.served), "vehicles": int(w.n_vehicles)}))
"""


def run(flag, steps, repeat):
    env = dict(os.environ, CITYLIGHT_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", WORKER, str(steps), str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=1800, help="simulated seconds per episode")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    t0 = time.perf_counter()
    rows = [run(flag, args.steps, args.repeat) for flag in ("1", "0")]
    if rows[0]["served"] != rows[1]["served"]:
        sys.exit("backends disagree on vehicles served")

    print(f"4x4 grid, {args.steps} s episode, max-pressure agent, best of {args.repeat}")
    print(f"{'backend':8s} {'episode s':>10s} {'first s':>9s} {'zone us':>9s} {'advance us':>11s}")
    for r in rows:
        print(f"{r['backend']:8s} {r['episode_s']:10.3f} {r['first_episode_s']:9.3f} "
              f"{r['zone_counts_us']:9.1f} {r['advance_lanes_us']:11.1f}")
    nb, np_ = rows
    print(f"speedup: episode {np_['episode_s'] / nb['episode_s']:.1f}x, "
          f"zone {np_['zone_counts_us'] / nb['zone_counts_us']:.1f}x, "
          f"advance {np_['advance_lanes_us'] / nb['advance_lanes_us']:.1f}x")
    print(f"(total {time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    main()
