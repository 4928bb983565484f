"""Pilot: full 20-episode adversarial training run with 8 scripted demos.

Run: python3 scripts/pilot_train.py [seed...]
"""
import sys
import time
from pathlib import Path

import numpy as np

from peghole import nn
from peghole.config import RunConfig
from peghole.demos import run_scripted_episode, save_episode
from peghole.policy import build_policy_net
from peghole.trainer import eval_policy, insertion_time_series, run_training

DEMO_DIR = Path("/tmp/pilot_demos")


def make_demos(cfg):
    DEMO_DIR.mkdir(exist_ok=True)
    if len(list(DEMO_DIR.glob("*.demo"))) == 8:
        return
    for i in range(8):
        ep = run_scripted_episode(cfg, 9000 + i)
        assert ep.success, i
        save_episode(ep, DEMO_DIR / f"demo{i}.demo")
        print(f"demo {i}: {ep.insertion_ticks} ticks")


def one_seed(seed):
    cfg = RunConfig()
    cfg.train.expert_dataset_path = str(DEMO_DIR)
    cfg.train.seed = seed
    t0 = time.time()
    result = run_training(cfg)
    ticks = [r.insertion_ticks for r in result.metrics.rows]
    succ = [r.success for r in result.metrics.rows]
    dloss = [r.disc_loss for r in result.metrics.rows]
    ents = [r.entropy for r in result.metrics.rows]
    ma = insertion_time_series(ticks, 5, cfg.sim.tick_hz)
    early, late = ma[4], ma[-1]
    print(f"seed {seed}: [{time.time()-t0:.0f}s] early_ma5 {early:.1f}s late_ma5 {late:.1f}s "
          f"improve {(1-late/early)*100:.0f}% succ {sum(succ)}/20")
    print(f"  ticks: {ticks}")
    print(f"  dloss: {[round(d,3) for d in dloss]}")
    print(f"  entropy: {[round(e,2) for e in ents]}")
    return cfg, result, (1 - late / early)


def main():
    seeds = [int(a) for a in sys.argv[1:]] or [0]
    cfg = RunConfig()
    make_demos(cfg)
    for seed in seeds:
        cfg, result, improve = one_seed(seed)
        if seed == seeds[-1]:
            t0 = time.time()
            ev = eval_policy(cfg, result.policy_params, 20, seed=77)
            fresh = nn.init_params(build_policy_net(cfg.net), cfg.net.init_seed)
            ev0 = eval_policy(cfg, fresh, 20, seed=77)
            print(f"eval trained: succ {ev.success_rate:.2f} mean {ev.mean_seconds:.1f}s | "
                  f"fresh: succ {ev0.success_rate:.2f} mean {ev0.mean_seconds:.1f}s [{time.time()-t0:.0f}s]")


if __name__ == "__main__":
    main()
