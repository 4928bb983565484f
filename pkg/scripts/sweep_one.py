"""Run one training variant over a seed list; prints one summary line.

Usage: python3 scripts/sweep_one.py NAME key=val [key=val...] -- seed [seed...]
"""
import sys

import numpy as np

from peghole.config import RunConfig
from peghole.trainer import eval_policy, insertion_time_series, run_training


def main():
    name = sys.argv[1]
    split = sys.argv.index("--")
    kvs = sys.argv[2:split]
    seeds = [int(s) for s in sys.argv[split + 1:]]
    out = [name]
    for seed in seeds:
        cfg = RunConfig()
        cfg.train.expert_dataset_path = "/tmp/pilot_demos"
        cfg.train.seed = seed
        for kv in kvs:
            k, v = kv.split("=")
            sect, f = k.split(".")
            cur = getattr(getattr(cfg, sect), f)
            setattr(getattr(cfg, sect), f, type(cur)(v))
        r = run_training(cfg)
        ticks = [x.insertion_ticks for x in r.metrics.rows]
        ma = insertion_time_series(ticks, 5, cfg.sim.tick_hz)
        ev = eval_policy(cfg, r.policy_params, 20, seed=77)
        dl = [round(x.disc_loss, 2) for x in r.metrics.rows]
        out.append(f"s{seed}: {(1 - ma[-1] / ma[4]) * 100:+.0f}% ev {ev.success_rate:.2f} "
                   f"ent {r.metrics.rows[-1].entropy:.2f} dl1 {dl[0]} dl11-20 {min(dl[10:])}-{max(dl[10:])}")
        print("  ".join(out), flush=True)
    print("DONE " + "  ".join(out), flush=True)


if __name__ == "__main__":
    main()
