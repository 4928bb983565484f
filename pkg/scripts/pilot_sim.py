"""Pilot harness: success rates and insertion times for fixed action rules.

Not part of the package; used to tune simulator constants.
Run: python3 scripts/pilot_sim.py
"""
import sys
import time

import numpy as np

from peghole.config import RunConfig
from peghole.demos import run_scripted_episode
from peghole.sim import EpisodeStatus, decode_action, reset, step


def run_rule(cfg, seed, rule):
    """rule(tick, state, rng) -> action int"""
    state = reset(cfg.sim, cfg.geom, seed)
    rng = np.random.Generator(np.random.PCG64(seed + (1 << 32)))
    status = EpisodeStatus.running()
    while not status.terminal:
        a = rule(state.tick, state, rng)
        target = decode_action(a, state.tick, cfg.wiggle, rng)
        state, sensed, status = step(state, target, cfg.sim, cfg.geom, rng)
    return status


def stats(name, cfg, rule, n=50):
    t0 = time.time()
    ticks, succ = [], 0
    for s in range(n):
        st = run_rule(cfg, 1000 + s, rule)
        if st.kind == "success":
            succ += 1
            ticks.append(st.ticks)
        else:
            ticks.append(cfg.sim.max_ticks)
    dt = time.time() - t0
    print(f"{name:12s} success {succ}/{n}  median_ticks {int(np.median(ticks))}  "
          f"mean {int(np.mean(ticks))}  [{dt:.1f}s]")
    return succ / n, np.mean(ticks)


def main():
    cfg = RunConfig()
    stats("always_1", cfg, lambda t, s, r: 1)
    stats("always_0", cfg, lambda t, s, r: 0)
    stats("uniform", cfg, lambda t, s, r: int(r.integers(4)))
    stats("down_only50", cfg, lambda t, s, r: int(r.choice([0, 1])))

    t0 = time.time()
    ticks, succ, acts = [], 0, []
    for s in range(50):
        ep = run_scripted_episode(cfg, 2000 + s)
        succ += ep.success
        ticks.append(ep.insertion_ticks)
        acts.append(np.bincount(ep.actions, minlength=4) / len(ep))
    print(f"{'expert':12s} success {succ}/50  median_ticks {int(np.median(ticks))}  "
          f"mean {int(np.mean(ticks))}  [{time.time()-t0:.1f}s]")
    print("expert action marginals:", np.mean(acts, axis=0).round(3))


if __name__ == "__main__":
    sys.exit(main())
