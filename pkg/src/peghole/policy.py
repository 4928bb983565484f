"""Generator policy: rolling observation windows and discrete action selection.

Window layout per time step (15 channels):
    0-5   pose (x, y, z mm, rx, ry, rz deg)
    6-10  sensed wrench (f_x, f_y, f_z N, m_x, m_y N*mm)
    11-14 previous-action one-hot

Rows run oldest to newest.  Before the buffer fills, rows are padded by
repeating the first frame, whose one-hot is action 3 (idle).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .config import NetConfig

OBS_CHANNELS = 15
N_ACTIONS = 4
IDLE_ACTION = 3


def build_policy_net(cfg: NetConfig) -> list[nn.LayerSpec]:
    t_out = cfg.window - cfg.kernel + 1
    return [
        nn.norm_time(cfg.window, OBS_CHANNELS, cfg.norm_eps),
        nn.conv1d_time(cfg.window, OBS_CHANNELS, cfg.conv_filters, cfg.kernel),
        nn.dense(t_out * cfg.conv_filters, cfg.hidden),
        nn.relu(cfg.hidden),
        nn.dense(cfg.hidden, cfg.hidden),
        nn.relu(cfg.hidden),
        nn.dense(cfg.hidden, N_ACTIONS, init_scale=cfg.head_scale),
        nn.softmax(N_ACTIONS),
    ]


def build_value_net(cfg: NetConfig) -> list[nn.LayerSpec]:
    t_out = cfg.window - cfg.kernel + 1
    return [
        nn.norm_time(cfg.window, OBS_CHANNELS, cfg.norm_eps),
        nn.conv1d_time(cfg.window, OBS_CHANNELS, cfg.conv_filters, cfg.kernel),
        nn.dense(t_out * cfg.conv_filters, cfg.hidden),
        nn.relu(cfg.hidden),
        nn.dense(cfg.hidden, cfg.hidden),
        nn.relu(cfg.hidden),
        nn.dense(cfg.hidden, 1, init_scale=cfg.head_scale),
    ]


def one_hot(action: int) -> np.ndarray:
    v = np.zeros(N_ACTIONS)
    v[action] = 1.0
    return v


def frame_vector(pose, sensed, prev_action: int, include_wrench: bool = True) -> np.ndarray:
    pose = np.asarray(pose, dtype=np.float64)
    sensed = np.asarray(sensed, dtype=np.float64)
    wrench5 = sensed[:5] if include_wrench else np.zeros(5)
    return np.concatenate([pose, wrench5, one_hot(prev_action)])


@dataclass
class HistoryBuffer:
    """Ring of the last T frames; always yields a full T x 15 window."""

    window: int
    include_wrench: bool = True
    frames: list = field(default_factory=list)

    def reset(self) -> None:
        self.frames.clear()


def observe(buffer: HistoryBuffer, pose, sensed, prev_action: int) -> np.ndarray:
    """Advance the buffer one tick and return the current T x 15 window."""
    buffer.frames.append(frame_vector(pose, sensed, prev_action, buffer.include_wrench))
    if len(buffer.frames) > buffer.window:
        del buffer.frames[0]
    pad = buffer.window - len(buffer.frames)
    rows = [buffer.frames[0]] * pad + buffer.frames
    return np.stack(rows)


def windows_from_arrays(poses, senseds, actions, window: int,
                        include_wrench: bool = True) -> np.ndarray:
    """Rebuild every per-tick window from recorded episode arrays.

    Frame t pairs pose_t with the wrench sensed during tick t-1 and the
    action taken at t-1, matching what the live loop feeds observe();
    tick 0 sees zero wrench and the idle one-hot.
    """
    poses = np.asarray(poses, dtype=np.float64)
    senseds = np.asarray(senseds, dtype=np.float64)
    actions = np.asarray(actions)
    n = poses.shape[0]
    frames = np.empty((n, OBS_CHANNELS))
    for t in range(n):
        sensed = senseds[t - 1] if t > 0 else np.zeros(6)
        prev = int(actions[t - 1]) if t > 0 else IDLE_ACTION
        frames[t] = frame_vector(poses[t], sensed, prev, include_wrench)
    out = np.empty((n, window, OBS_CHANNELS))
    for t in range(n):
        pad = max(0, window - 1 - t)
        lo = max(0, t - window + 1)
        rows = np.concatenate([np.repeat(frames[:1], pad, axis=0), frames[lo:t + 1]])
        out[t] = rows
    return out


@dataclass
class PolicyDecision:
    action: int
    log_prob: float
    probs: np.ndarray


def act(net: list[nn.LayerSpec], params: nn.ParamSet, window: np.ndarray,
        rng: np.random.Generator | None, mode: str = "sample") -> PolicyDecision:
    """Pick an action from the softmax head.

    sample mode draws from the categorical; argmax picks the highest
    probability with ties broken toward the lowest action code.
    """
    probs, _ = nn.forward(net, params, window)
    if not np.all(np.isfinite(probs)):
        raise ValueError("non-finite policy output")
    if mode == "sample":
        if rng is None:
            raise ValueError("sample mode needs an rng")
        a = int(np.searchsorted(np.cumsum(probs), rng.uniform()))
        a = min(a, N_ACTIONS - 1)
    elif mode == "argmax":
        a = int(np.argmax(probs))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return PolicyDecision(a, float(np.log(max(probs[a], 1e-300))), probs)


def entropy(probs: np.ndarray) -> float | np.ndarray:
    """Shannon entropy in nats; safe at p = 0."""
    p = np.asarray(probs, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=-1)
