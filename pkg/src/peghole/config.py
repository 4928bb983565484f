"""Run configuration: dataclasses, defaults, and the key=value config file.

One flat namespace of keys maps onto the section dataclasses below.  Every
key can come from a config file (`key = value`, `#` comments) or a CLI
`--set key=value` override; unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np


@dataclass
class HoleGeom:
    """Hole and peg geometry; the peg radius is hole_radius - clearance."""

    hole_radius: float = 10.0       # mm
    clearance: float = 0.05         # mm, radial peg/hole gap
    hole_depth: float = 20.0        # mm, full insertion
    wall_stiffness: float = 1000.0  # N/mm penalty spring
    friction_coeff: float = 0.3

    @property
    def peg_radius(self) -> float:
        return self.hole_radius - self.clearance

    def validate(self) -> None:
        if not (0 < self.clearance < self.hole_radius):
            raise ValueError("clearance must be positive and below hole_radius")
        if self.hole_depth <= 0:
            raise ValueError("hole_depth must be positive")
        if self.wall_stiffness <= 0:
            raise ValueError("wall_stiffness must be positive")
        if self.friction_coeff < 0:
            raise ValueError("friction_coeff must be non-negative")


@dataclass
class SimConfig:
    tick_hz: float = 100.0
    # (x, y, z, rx, ry, rz); N/mm and N*mm/deg
    impedance_stiffness: tuple = (10.0, 10.0, 10.0, 600.0, 600.0, 600.0)
    # N*s/mm and N*mm*s/deg
    impedance_damping: tuple = (1.0, 1.0, 1.0, 60.0, 60.0, 60.0)
    force_limit: float = 30.0       # N, per-component clip on commanded force
    max_ticks: int = 3000
    start_offset_range: float = 1.0  # mm, uniform +/- in x and y
    start_tilt_range: float = 2.0    # deg, uniform +/- roll and pitch
    gravity_compensated: bool = True
    sensor_noise: float = 0.05      # N (and N*mm), zero-mean gaussian
    peg_weight: float = 5.0         # N, only applied when not compensated
    include_wrench_obs: bool = True  # ablation switch for the wrench channels

    def validate(self) -> None:
        if self.tick_hz <= 0:
            raise ValueError("tick_hz must be positive")
        if self.max_ticks <= 0:
            raise ValueError("max_ticks must be positive")
        if len(self.impedance_stiffness) != 6 or len(self.impedance_damping) != 6:
            raise ValueError("impedance gains must be 6-vectors")
        if min(self.impedance_stiffness) <= 0 or min(self.impedance_damping) <= 0:
            raise ValueError("impedance gains must be componentwise positive")
        if self.start_offset_range < 0 or self.start_tilt_range < 0:
            raise ValueError("start ranges must be non-negative")
        if self.force_limit <= 0:
            raise ValueError("force_limit must be positive")
        if self.sensor_noise < 0:
            raise ValueError("sensor_noise must be non-negative")

    @property
    def dt(self) -> float:
        return 1.0 / self.tick_hz


@dataclass
class WiggleParams:
    """Action decoding: downward push magnitude and random-moment amplitude."""

    f_down: float = 10.0   # N
    amp: float = 50.0      # N*mm, uniform +/- per tick on roll/pitch/yaw


@dataclass
class NetConfig:
    window: int = 10        # T, ticks per observation window
    conv_filters: int = 16
    kernel: int = 3
    hidden: int = 64
    norm_eps: float = 0.1
    head_scale: float = 0.1  # shrink on the final-layer init
    init_seed: int = 0


@dataclass
class PPOConfig:
    clip_ratio: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    epochs: int = 4
    minibatch: int = 256
    value_weight: float = 0.5
    entropy_weight: float = 0.01
    lr: float = 3e-3
    optimizer: str = "adam"
    target_kl: float = 0.05   # stop an update's epochs early past this drift

    def validate(self) -> None:
        if not (0 < self.clip_ratio < 1):
            raise ValueError("clip_ratio must be in (0, 1)")
        if not (0 <= self.gamma <= 1 and 0 <= self.gae_lambda <= 1):
            raise ValueError("gamma and gae_lambda must be in [0, 1]")
        if self.epochs < 1 or self.minibatch < 1:
            raise ValueError("epochs and minibatch must be >= 1")


@dataclass
class TrainConfig:
    n_episodes: int = 20
    disc_iters_per_round: int = 150     # within the 100-500 band
    disc_input_noise: float = 0.5       # feature jitter; bounds separability
    disc_update_every_k_episodes: int = 1
    gen_updates_per_episode: int = 4
    expert_dataset_path: str = ""
    seed: int = 0
    metric_window: int = 5
    disc_lr: float = 3e-4
    disc_batch: int = 128               # per side, per iteration
    replay_episodes: int = 3            # generated pool for disc rounds

    def validate(self) -> None:
        if self.n_episodes < 0:
            raise ValueError("n_episodes must be >= 0")
        if min(self.disc_iters_per_round, self.gen_updates_per_episode,
               self.disc_update_every_k_episodes, self.metric_window) < 1:
            raise ValueError("training cadence counts must be >= 1")
        rounds_per_episode = 1.0 / self.disc_update_every_k_episodes
        if self.gen_updates_per_episode < rounds_per_episode:
            raise ValueError("generator must update at least as often as the discriminator")


@dataclass
class RunConfig:
    geom: HoleGeom = field(default_factory=HoleGeom)
    sim: SimConfig = field(default_factory=SimConfig)
    wiggle: WiggleParams = field(default_factory=WiggleParams)
    net: NetConfig = field(default_factory=NetConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> None:
        self.geom.validate()
        self.sim.validate()
        self.ppo.validate()
        self.train.validate()

    def to_dict(self) -> dict:
        return {
            section.name: dataclasses.asdict(getattr(self, section.name))
            for section in fields(self)
        }


_SECTIONS = ("geom", "sim", "wiggle", "net", "ppo", "train")


def _coerce(raw: str, current):
    if isinstance(current, bool):
        low = raw.strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        parts = [float(p) for p in raw.replace(",", " ").split()]
        if len(parts) != len(current):
            raise ValueError(f"expected {len(current)} values, got {len(parts)}")
        return tuple(parts)
    return raw


def apply_overrides(cfg: RunConfig, overrides: dict[str, str]) -> RunConfig:
    """Set flat `key` or `section.key` entries onto cfg, with type coercion."""
    for key, raw in overrides.items():
        target = None
        name = key
        if "." in key:
            section, name = key.split(".", 1)
            if section not in _SECTIONS:
                raise KeyError(f"unknown config section {section!r}")
            candidates = [getattr(cfg, section)]
        else:
            candidates = [getattr(cfg, s) for s in _SECTIONS]
        hits = [c for c in candidates if hasattr(c, name)]
        if len(hits) == 0:
            raise KeyError(f"unknown config key {key!r}")
        if len(hits) > 1:
            raise KeyError(f"ambiguous config key {key!r}; prefix with a section")
        target = hits[0]
        setattr(target, name, _coerce(str(raw), getattr(target, name)))
    return cfg


def parse_config_text(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, val = stripped.split("=", 1)
        entries[key.strip()] = val.strip()
    return entries


def load_config(path: str | Path | None = None,
                overrides: dict[str, str] | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        cfg = apply_overrides(cfg, parse_config_text(Path(path).read_text()))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    cfg.validate()
    return cfg


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def episode_seed(base_seed: int, episode: int, stream: int = 0) -> int:
    """Stable per-episode seed derivation; keeps resumed runs bit-identical."""
    ss = np.random.SeedSequence([int(base_seed), int(episode), int(stream)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
