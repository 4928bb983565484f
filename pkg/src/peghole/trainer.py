"""Adversarial imitation training loop.

Per episode: roll the generator in the simulator (sampling mode), score
every (window, action) pair with the discriminator, reward with
-log(1 - D), run a fixed number of clipped-surrogate updates, then (every
k-th episode) retrain the discriminator on balanced expert/generated
batches drawn from the expert dataset and a replay of recent episodes.
Metrics append one CSV row per episode; parameters checkpoint after every
episode.  Everything derives from the base seed, so a run is reproducible
and resumable bit-for-bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .config import RunConfig, episode_seed, rng_from_seed
from .demos import Episode, build_expert_dataset, load_episode, save_episode
from .discriminator import (build_disc_net, gail_reward, score_batch,
                            train_discriminator)
from .policy import (HistoryBuffer, act, build_policy_net, build_value_net,
                     entropy, observe, one_hot, windows_from_arrays)
from .ppo import Rollout, ppo_update, value_forward_batch
from .sim import EpisodeStatus, SimFault, decode_action, reset, step

METRICS_HEADER = "episode,gen_reward_mean,disc_loss,insertion_ticks,success,entropy"

CKPT_MAGIC = b"PHCKPT\n"


@dataclass
class CollectResult:
    episode: Episode
    windows: np.ndarray     # (N, T, 15)
    onehots: np.ndarray     # (N, 4)
    log_probs: np.ndarray   # (N,)
    mean_entropy: float
    fault: str | None = None


def collect_episode(cfg: RunConfig, policy_net, policy_params,
                    reset_seed: int, rng: np.random.Generator,
                    mode: str = "sample") -> CollectResult:
    """Run one episode; record windows, actions, log-probs and sim rows."""
    state = reset(cfg.sim, cfg.geom, reset_seed)
    buf = HistoryBuffer(cfg.net.window, cfg.sim.include_wrench_obs)
    poses, senseds, cmds, actions, logps, windows, ents = [], [], [], [], [], [], []
    sensed_vec = np.zeros(6)
    prev_action = 3
    status = EpisodeStatus.running()
    fault = None
    while not status.terminal:
        window = observe(buf, state.pose, sensed_vec, prev_action)
        decision = act(policy_net, policy_params, window, rng, mode)
        target = decode_action(decision.action, state.tick, cfg.wiggle, rng)
        windows.append(window)
        poses.append(state.pose.copy())
        actions.append(decision.action)
        cmds.append(target.vec6())
        logps.append(decision.log_prob)
        ents.append(entropy(decision.probs))
        try:
            state, sensed, status = step(state, target, cfg.sim, cfg.geom, rng)
        except SimFault as exc:
            fault = str(exc)
            break
        sensed_vec = sensed.vec6()
        senseds.append(sensed_vec)
        prev_action = decision.action
    n = len(actions)
    episode = Episode(
        poses=np.array(poses).reshape(n, 6),
        senseds=np.array(senseds).reshape(len(senseds), 6) if senseds else np.zeros((0, 6)),
        cmds=np.array(cmds).reshape(n, 6),
        actions=np.array(actions, dtype=np.uint8),
        timestamps=np.arange(n) / cfg.sim.tick_hz,
        success=status.kind == "success",
        insertion_ticks=status.ticks if status.kind == "success" else cfg.sim.max_ticks,
        seed=reset_seed, tick_hz=cfg.sim.tick_hz,
        geom={"hole_radius": cfg.geom.hole_radius, "clearance": cfg.geom.clearance,
              "hole_depth": cfg.geom.hole_depth},
    )
    if fault is not None and len(episode.senseds) < n:
        episode.senseds = np.vstack([episode.senseds, np.zeros((n - len(episode.senseds), 6))])
    return CollectResult(
        episode=episode,
        windows=np.array(windows).reshape(n, cfg.net.window, 15),
        onehots=np.stack([one_hot(a) for a in actions]) if n else np.zeros((0, 4)),
        log_probs=np.array(logps),
        mean_entropy=float(np.mean(ents)) if ents else 0.0,
        fault=fault,
    )


@dataclass
class MetricsRow:
    episode: int
    gen_reward_mean: float
    disc_loss: float
    insertion_ticks: int
    success: bool
    entropy: float

    def csv(self) -> str:
        return (f"{self.episode},{self.gen_reward_mean:.6f},{self.disc_loss:.6f},"
                f"{self.insertion_ticks},{int(self.success)},{self.entropy:.6f}")


@dataclass
class TrainMetrics:
    rows: list[MetricsRow] = field(default_factory=list)
    # instrumentation: ("collect"|"ppo"|"disc", episode, detail) in order
    events: list[tuple] = field(default_factory=list)

    def to_csv(self) -> str:
        return "\n".join([METRICS_HEADER] + [r.csv() for r in self.rows]) + "\n"


@dataclass
class TrainResult:
    metrics: TrainMetrics
    policy_params: nn.ParamSet
    value_params: nn.ParamSet
    disc_params: nn.ParamSet


def insertion_time_series(ticks, window: int, tick_hz: float = 100.0):
    """Trailing moving average of insertion ticks, in seconds.

    Timeouts are expected to be recorded at the episode cap already.  If
    the window exceeds the series length, the single overall average is
    returned.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    t = np.asarray(ticks, dtype=np.float64)
    if len(t) == 0:
        return np.zeros(0)
    if window > len(t):
        return np.array([t.mean() / tick_hz])
    out = np.empty(len(t))
    for i in range(len(t)):
        lo = max(0, i - window + 1)
        out[i] = t[lo:i + 1].mean()
    return out / tick_hz


# ---------------------------------------------------------------------------
# checkpoint bundle: named parameter blobs + optimizer state + meta


def save_checkpoint(path, meta: dict, blobs: dict[str, bytes]) -> None:
    header = json.dumps({"meta": meta,
                         "blobs": {k: len(v) for k, v in blobs.items()}},
                        sort_keys=True).encode()
    body = CKPT_MAGIC + struct.pack("<I", len(header)) + header
    for name in sorted(blobs):
        body += blobs[name]
    Path(path).write_bytes(body)


def load_checkpoint(path) -> tuple[dict, dict[str, bytes]]:
    data = Path(path).read_bytes()
    if not data.startswith(CKPT_MAGIC):
        raise ValueError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<I", data[len(CKPT_MAGIC):len(CKPT_MAGIC) + 4])
    pos = len(CKPT_MAGIC) + 4
    header = json.loads(data[pos:pos + hlen])
    pos += hlen
    blobs = {}
    for name in sorted(header["blobs"]):
        size = header["blobs"][name]
        blobs[name] = data[pos:pos + size]
        pos += size
    if pos != len(data):
        raise ValueError(f"{path}: checkpoint truncated or padded")
    return header["meta"], blobs


def _opt_blob(opt: nn.OptimizerState) -> bytes:
    m = opt.m if opt.m is not None else np.zeros(0)
    v = opt.v if opt.v is not None else np.zeros(0)
    head = json.dumps({"kind": opt.kind, "t": opt.t, "n": m.size}).encode()
    return struct.pack("<I", len(head)) + head + m.astype("<f8").tobytes() \
        + v.astype("<f8").tobytes()


def _opt_from_blob(data: bytes) -> nn.OptimizerState:
    (hlen,) = struct.unpack("<I", data[:4])
    head = json.loads(data[4:4 + hlen])
    n = head["n"]
    vals = np.frombuffer(data[4 + hlen:], dtype="<f8")
    m = vals[:n].copy() if n else None
    v = vals[n:2 * n].copy() if n else None
    return nn.OptimizerState(kind=head["kind"], t=head["t"], m=m, v=v)


def _episode_rewards(disc_net, disc_params, windows, onehots, eps, form):
    d = score_batch(disc_net, disc_params, windows, onehots, eps)
    return gail_reward(d, form)


def run_training(cfg: RunConfig, out_dir: str | Path | None = None,
                 resume_from: str | Path | None = None) -> TrainResult:
    """The alternation loop; returns metrics and final parameters.

    With out_dir set, appends metrics.csv row by row, saves every episode
    to episodes/, and checkpoints after each episode (latest.ckpt plus a
    per-episode file).  resume_from restarts mid-run from a checkpoint in
    the same out_dir and reproduces the remaining episodes exactly.
    """
    cfg.validate()
    tcfg = cfg.train
    if not tcfg.expert_dataset_path:
        raise ValueError("expert dataset not found: no expert_dataset_path configured")
    demo_dir = Path(tcfg.expert_dataset_path)
    if demo_dir.is_dir():
        demo_files = sorted(demo_dir.glob("*.demo"))
    else:
        demo_files = [demo_dir] if demo_dir.exists() else []
    if not demo_files:
        raise ValueError(f"expert dataset not found: {tcfg.expert_dataset_path}")
    dataset = build_expert_dataset(demo_files, cfg.net.window,
                                   cfg.sim.include_wrench_obs)

    policy_net = build_policy_net(cfg.net)
    value_net = build_value_net(cfg.net)
    disc_net = build_disc_net(cfg.net)

    policy_params = nn.init_params(policy_net, cfg.net.init_seed)
    value_params = nn.init_params(value_net, cfg.net.init_seed + 1)
    disc_params = nn.init_params(disc_net, cfg.net.init_seed + 2)
    policy_opt = nn.make_optimizer(cfg.ppo.optimizer)
    value_opt = nn.make_optimizer(cfg.ppo.optimizer)
    disc_opt = nn.make_optimizer("adam")
    start_episode = 0
    disc_loss = float("nan")

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "episodes").mkdir(parents=True, exist_ok=True)
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)

    if resume_from is not None:
        meta, blobs = load_checkpoint(resume_from)
        policy_params = nn.deserialize_params(blobs["policy"], policy_net)
        value_params = nn.deserialize_params(blobs["value"], value_net)
        disc_params = nn.deserialize_params(blobs["disc"], disc_net)
        policy_opt = _opt_from_blob(blobs["policy_opt"])
        value_opt = _opt_from_blob(blobs["value_opt"])
        disc_opt = _opt_from_blob(blobs["disc_opt"])
        start_episode = int(meta["episode"]) + 1
        disc_loss = float(meta.get("disc_loss", "nan"))
        if int(meta["seed"]) != tcfg.seed:
            raise ValueError("checkpoint seed does not match the configured seed")

    metrics = TrainMetrics()
    if out is not None and start_episode == 0:
        (out / "metrics.csv").write_text(METRICS_HEADER + "\n")

    # generated replay pool for discriminator rounds: the last few episodes
    replay: list[tuple[np.ndarray, np.ndarray]] = []
    if resume_from is not None and out is not None:
        for k in range(max(0, start_episode - tcfg.replay_episodes), start_episode):
            ep = load_episode(out / "episodes" / f"ep{k:04d}.demo")
            w = windows_from_arrays(ep.poses, ep.senseds, ep.actions,
                                    cfg.net.window, cfg.sim.include_wrench_obs)
            replay.append((w, np.stack([one_hot(int(a)) for a in ep.actions])))

    for episode in range(start_episode, tcfg.n_episodes):
        rng = rng_from_seed(episode_seed(tcfg.seed, episode, stream=1))
        res = collect_episode(cfg, policy_net, policy_params,
                              episode_seed(tcfg.seed, episode, stream=0), rng)
        metrics.events.append(("collect", episode,
                               {"ticks": len(res.episode), "fault": res.fault}))
        if res.fault is not None:
            # record the aborted episode and move on
            row = MetricsRow(episode, 0.0, disc_loss, cfg.sim.max_ticks, False,
                             res.mean_entropy)
            metrics.rows.append(row)
            if out is not None:
                with open(out / "metrics.csv", "a") as fh:
                    fh.write(row.csv() + "\n")
            continue

        rewards = _episode_rewards(disc_net, disc_params, res.windows,
                                   res.onehots, cfg.net.norm_eps,
                                   "neg_log_one_minus_d")
        values = value_forward_batch(value_net, value_params, res.windows)
        dones = np.zeros(len(res.episode), dtype=bool)
        if len(dones):
            dones[-1] = True
        rollout = Rollout(res.windows, res.episode.actions.astype(int),
                          res.log_probs, rewards, values, dones)

        for u in range(tcfg.gen_updates_per_episode):
            policy_params, value_params, stats, policy_opt, value_opt = ppo_update(
                policy_net, value_net, policy_params, value_params, rollout,
                cfg.ppo, rng, policy_opt, value_opt)
            metrics.events.append(("ppo", episode,
                                   {"update": u, "kl": stats.approx_kl,
                                    "aborted": stats.aborted}))

        replay.append((res.windows, res.onehots))
        if len(replay) > tcfg.replay_episodes:
            del replay[0]

        if (episode + 1) % tcfg.disc_update_every_k_episodes == 0:
            gen_w = np.concatenate([w for w, _ in replay])
            gen_a = np.concatenate([a for _, a in replay])
            b = min(len(dataset.windows), len(gen_w))
            ei = rng.choice(len(dataset.windows), size=b, replace=False)
            gi = rng.choice(len(gen_w), size=b, replace=False)
            disc_params, disc_loss, disc_opt = train_discriminator(
                disc_net, disc_params,
                (dataset.windows[ei], dataset.onehots[ei]),
                (gen_w[gi], gen_a[gi]),
                tcfg.disc_iters_per_round, lr=tcfg.disc_lr, rng=rng,
                batch_size=tcfg.disc_batch, eps=cfg.net.norm_eps,
                input_noise=tcfg.disc_input_noise)
            metrics.events.append(("disc", episode,
                                   {"expert": b, "generated": b,
                                    "iters": tcfg.disc_iters_per_round,
                                    "loss": disc_loss}))

        row = MetricsRow(episode, float(np.mean(rewards)) if len(rewards) else 0.0,
                         disc_loss, res.episode.insertion_ticks,
                         res.episode.success, res.mean_entropy)
        metrics.rows.append(row)

        if out is not None:
            with open(out / "metrics.csv", "a") as fh:
                fh.write(row.csv() + "\n")
            save_episode(res.episode, out / "episodes" / f"ep{episode:04d}.demo")
            blobs = {
                "policy": nn.serialize_params(policy_params),
                "value": nn.serialize_params(value_params),
                "disc": nn.serialize_params(disc_params),
                "policy_opt": _opt_blob(policy_opt),
                "value_opt": _opt_blob(value_opt),
                "disc_opt": _opt_blob(disc_opt),
            }
            meta = {"episode": episode, "seed": tcfg.seed, "disc_loss": disc_loss}
            save_checkpoint(out / "checkpoints" / f"ep{episode:04d}.ckpt", meta, blobs)
            save_checkpoint(out / "checkpoints" / "latest.ckpt", meta, blobs)

    return TrainResult(metrics, policy_params, value_params, disc_params)


@dataclass
class EvalSummary:
    n_episodes: int
    success_rate: float
    mean_seconds: float
    p50_seconds: float
    p90_seconds: float
    rows: list[tuple]   # (episode, ticks, success)


def eval_policy(cfg: RunConfig, policy_params: nn.ParamSet, n_episodes: int,
                seed: int, mode: str = "argmax") -> EvalSummary:
    """Deterministic-policy evaluation over fresh episode seeds."""
    policy_net = build_policy_net(cfg.net)
    rows = []
    ticks = []
    succ = 0
    for i in range(n_episodes):
        rng = rng_from_seed(episode_seed(seed, i, stream=3))
        res = collect_episode(cfg, policy_net, policy_params,
                              episode_seed(seed, i, stream=2), rng, mode=mode)
        t = res.episode.insertion_ticks
        ticks.append(t)
        succ += int(res.episode.success)
        rows.append((i, t, res.episode.success))
    t = np.asarray(ticks, dtype=np.float64)
    hz = cfg.sim.tick_hz
    return EvalSummary(
        n_episodes=n_episodes,
        success_rate=succ / n_episodes if n_episodes else 0.0,
        mean_seconds=float(t.mean() / hz) if n_episodes else 0.0,
        p50_seconds=float(np.percentile(t, 50) / hz) if n_episodes else 0.0,
        p90_seconds=float(np.percentile(t, 90) / hz) if n_episodes else 0.0,
        rows=rows,
    )
