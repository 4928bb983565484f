"""Expert demonstrations: scripted expert, teleop discretization, file format.

Episode files are length-prefixed binary: a one-line text magic, a JSON
metadata line, the tick count, fixed-width little-endian rows of
(pose 6, sensed 6, commanded 6, timestamp, action), and a trailing CRC32
over everything before it.  Continuous teleoperation records use the same
container with action = 255 until discretized.
"""

from __future__ import annotations

import json
import struct
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import HoleGeom, RunConfig
from .policy import one_hot, windows_from_arrays
from .sim import GRIP_LEVER, EpisodeStatus, decode_action, reset, step

FILE_MAGIC = b"PEGDEMO\n"
FILE_VERSION = 1
NO_ACTION = 255           # continuous record, not yet discretized
ROW_FORMAT = "<19dB"      # pose6 + sensed6 + cmd6 + timestamp, action byte
ROW_SIZE = struct.calcsize(ROW_FORMAT)

# scripted-expert rule constants.  K_STUCK sits inside the policy's
# 10-tick observation window so a fully stalled window is an unambiguous
# wiggle cue in the demonstrations.
EPS_PROGRESS = 0.01       # mm/tick of descent counted as progress
K_STUCK = 8               # ticks without progress before wiggle turns on
J_CLEAR = 10              # progressing ticks before wiggle turns back off
HISTORY_TAIL = 400        # ticks of progress history the rule looks at


@dataclass
class Episode:
    """One insertion attempt: per-tick rows plus metadata."""

    poses: np.ndarray       # (N, 6)
    senseds: np.ndarray     # (N, 6)
    cmds: np.ndarray        # (N, 6) commanded target wrench
    actions: np.ndarray     # (N,) uint8; 255 while continuous
    timestamps: np.ndarray  # (N,) seconds
    success: bool
    insertion_ticks: int    # valid when success
    seed: int
    tick_hz: float
    geom: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def discrete(self) -> bool:
        return len(self) == 0 or int(self.actions.max(initial=0)) <= 3


# TeleopRecord is an Episode whose actions are all NO_ACTION; keep the alias
# so call sites say what they mean.
TeleopRecord = Episode


def save_episode(episode: Episode, path: str | Path) -> None:
    meta = {
        "version": FILE_VERSION,
        "success": bool(episode.success),
        "insertion_ticks": int(episode.insertion_ticks),
        "seed": int(episode.seed),
        "tick_hz": float(episode.tick_hz),
        "geom": episode.geom,
        "n": len(episode),
    }
    body = bytearray()
    body += FILE_MAGIC
    body += (json.dumps(meta, sort_keys=True) + "\n").encode()
    body += struct.pack("<I", len(episode))
    for i in range(len(episode)):
        body += struct.pack(
            ROW_FORMAT,
            *episode.poses[i], *episode.senseds[i], *episode.cmds[i],
            float(episode.timestamps[i]), int(episode.actions[i]),
        )
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    Path(path).write_bytes(bytes(body))


def load_episode(path: str | Path) -> Episode:
    data = Path(path).read_bytes()
    if not data.startswith(FILE_MAGIC):
        raise ValueError(f"{path}: not an episode file")
    if len(data) < len(FILE_MAGIC) + 4:
        raise ValueError(f"{path}: truncated episode file")
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != crc:
        raise ValueError(f"{path}: episode file checksum mismatch")
    nl = data.index(b"\n", len(FILE_MAGIC))
    meta = json.loads(data[len(FILE_MAGIC):nl])
    if meta.get("version") != FILE_VERSION:
        raise ValueError(f"{path}: unsupported episode file version {meta.get('version')}")
    pos = nl + 1
    (n,) = struct.unpack("<I", data[pos:pos + 4])
    pos += 4
    if len(data) != pos + n * ROW_SIZE + 4:
        raise ValueError(f"{path}: episode file truncated")
    poses = np.empty((n, 6))
    senseds = np.empty((n, 6))
    cmds = np.empty((n, 6))
    actions = np.empty(n, dtype=np.uint8)
    timestamps = np.empty(n)
    for i in range(n):
        row = struct.unpack_from(ROW_FORMAT, data, pos + i * ROW_SIZE)
        poses[i] = row[0:6]
        senseds[i] = row[6:12]
        cmds[i] = row[12:18]
        timestamps[i] = row[18]
        actions[i] = row[19]
    if n > 1 and not np.all(np.diff(timestamps) > 0):
        raise ValueError(f"{path}: timestamps are not strictly increasing")
    return Episode(poses, senseds, cmds, actions, timestamps,
                   success=bool(meta["success"]),
                   insertion_ticks=int(meta["insertion_ticks"]),
                   seed=int(meta["seed"]), tick_hz=float(meta["tick_hz"]),
                   geom=dict(meta.get("geom", {})))


def scripted_expert(state, progress_history, rng, geom: HoleGeom,
                    eps_progress: float = EPS_PROGRESS,
                    k_stuck: int = K_STUCK, j_clear: int = J_CLEAR) -> int:
    """Down while descending, down+wiggle once stuck, idle after success.

    progress_history holds recent per-tick descent (-delta p_z, mm), most
    recent last.  Wiggle engages after k_stuck ticks without progress and
    latches until j_clear consecutive progressing ticks, so the escape is
    one sustained burst instead of chatter.  Progress is measured on
    descent rather than the depth field, which by definition sits at zero
    while the peg still advances through the chamfer.
    """
    if state.depth >= geom.hole_depth:
        return 3
    stall_run = clear_run = 0
    engaged = False
    for delta in list(progress_history)[-HISTORY_TAIL:]:
        if delta < eps_progress:
            stall_run += 1
            clear_run = 0
        else:
            clear_run += 1
            stall_run = 0
        if stall_run >= k_stuck:
            engaged = True
        if clear_run >= j_clear:
            engaged = False
    return 0 if engaged else 1


def run_scripted_episode(cfg: RunConfig, seed: int) -> Episode:
    """Roll the scripted expert in the simulator and record every tick."""
    state = reset(cfg.sim, cfg.geom, seed)
    rng = np.random.Generator(np.random.PCG64(seed + (1 << 32)))
    poses, senseds, cmds, actions = [], [], [], []
    progress: list[float] = []
    status = EpisodeStatus.running()
    while not status.terminal:
        a = scripted_expert(state, progress, rng, cfg.geom)
        target = decode_action(a, state.tick, cfg.wiggle, rng)
        poses.append(state.pose.copy())
        actions.append(a)
        cmds.append(target.vec6())
        prev_z = state.pose[2]
        state, sensed, status = step(state, target, cfg.sim, cfg.geom, rng)
        senseds.append(sensed.vec6())
        progress.append(prev_z - state.pose[2])
        if len(progress) > HISTORY_TAIL:
            del progress[0]
    n = len(actions)
    return Episode(
        poses=np.array(poses).reshape(n, 6),
        senseds=np.array(senseds).reshape(n, 6),
        cmds=np.array(cmds).reshape(n, 6),
        actions=np.array(actions, dtype=np.uint8),
        timestamps=np.arange(n) / cfg.sim.tick_hz,
        success=status.kind == "success",
        insertion_ticks=status.ticks if status.kind == "success" else cfg.sim.max_ticks,
        seed=seed, tick_hz=cfg.sim.tick_hz,
        geom={"hole_radius": cfg.geom.hole_radius, "clearance": cfg.geom.clearance,
              "hole_depth": cfg.geom.hole_depth},
    )


@dataclass
class DiscretizeThresholds:
    theta_down: float = 5.0    # N on |f_z|; default F_down / 2
    theta_wig: float = 12.5    # N*mm rolling std; default A_w / 4
    window: int = 10           # ticks for the rolling std


def discretize_teleop(record: Episode,
                      thresholds: DiscretizeThresholds | None = None) -> Episode:
    """Label each tick of a continuous record with a discrete action.

    Down bit: |commanded f_z| above theta_down.  Wiggle bit: rolling std of
    the rotational-equivalent command channels (m_x, m_y via the grip
    lever, plus m_z) above theta_wig.
    """
    th = thresholds or DiscretizeThresholds()
    n = len(record)
    if n == 0:
        raise ValueError("empty teleop record")
    if n > 1 and not np.all(np.diff(record.timestamps) > 0):
        raise ValueError("teleop record timestamps are not strictly increasing")
    down = np.abs(record.cmds[:, 2]) > th.theta_down
    rot_eq = np.stack([
        record.cmds[:, 3] - GRIP_LEVER * record.cmds[:, 1],
        record.cmds[:, 4] + GRIP_LEVER * record.cmds[:, 0],
        record.cmds[:, 5],
    ], axis=1)
    wig = np.zeros(n, dtype=bool)
    for t in range(n):
        lo = max(0, t - th.window + 1)
        seg = rot_eq[lo:t + 1]
        wig[t] = seg.std(axis=0).max() > th.theta_wig if len(seg) >= 2 else False
    actions = np.where(down & wig, 0, np.where(down, 1, np.where(wig, 2, 3)))
    out = Episode(record.poses.copy(), record.senseds.copy(), record.cmds.copy(),
                  actions.astype(np.uint8), record.timestamps.copy(),
                  record.success, record.insertion_ticks, record.seed,
                  record.tick_hz, dict(record.geom))
    return out


@dataclass
class DemoDataset:
    episodes: list
    windows: np.ndarray   # (M, T, 15)
    onehots: np.ndarray   # (M, 4)
    n_samples: int


# sample-count scale the discriminator expects; deviations beyond 5x warn
EXPECTED_SAMPLES = 500


def build_expert_dataset(paths, window: int, include_wrench: bool = True,
                         stride: int = 5) -> DemoDataset:
    """Concatenate successful demo episodes into (window, action) samples.

    Samples are strided across each episode so ~8 demos land near the ~500
    sample scale; windows keep full tick resolution.
    """
    paths = [Path(p) for p in paths]
    if not paths:
        raise ValueError("no demonstration files given")
    seen = set()
    for p in paths:
        key = str(p.resolve())
        if key in seen:
            warnings.warn(f"duplicate demonstration file {p}; its samples count twice")
        seen.add(key)
    episodes, all_w, all_a = [], [], []
    for p in paths:
        ep = load_episode(p)
        if not ep.discrete:
            raise ValueError(f"{p}: record is continuous; discretize it first")
        if not ep.success:
            continue
        episodes.append(ep)
        w = windows_from_arrays(ep.poses, ep.senseds, ep.actions, window,
                                include_wrench)
        idx = np.arange(0, len(ep), stride)
        all_w.append(w[idx])
        all_a.append(np.stack([one_hot(int(a)) for a in ep.actions[idx]]))
    if not episodes:
        raise ValueError("no successful demonstration episodes; dataset is empty")
    windows = np.concatenate(all_w)
    onehots = np.concatenate(all_a)
    n = len(windows)
    if n > 5 * EXPECTED_SAMPLES or n < EXPECTED_SAMPLES / 5:
        warnings.warn(
            f"expert dataset has {n} samples; expected within 5x of "
            f"{EXPECTED_SAMPLES}")
    return DemoDataset(episodes, windows, onehots, n)
