"""Quasi-static peg-in-hole contact simulator at a fixed 100 Hz-equivalent tick.

Model summary
-------------
A cylindrical peg (radius = hole_radius - clearance) above a chamfered hole.
Coordinates: hole axis is +z, the bore mouth plane is z = 0, the bore bottom
is z = -hole_depth.  A conical lead-in (CHAMFER_EXTRA wide, CHAMFER_DEPTH
deep) sits above the mouth so that pure downward force centers a laterally
offset peg; with a 0.05 mm clearance nothing enters the bore otherwise.

Contact is penalty-based: radial springs at up to two points (peg tip edge
and the bore mouth edge).  A tilted peg wedges: both contacts load up and
Coulomb friction (a static-friction deadband on the vertical axis) stalls
the descent.  Rotation is normally locked by load-proportional stiction --
an industrial wrist holds orientation against moderate contact moments --
but sustained commanded wiggle "melts" the stiction and gates in the
righting moment from the mouth contact, so vibration ratchets a jammed peg
back toward alignment.  The melt builds over consecutive wiggle ticks and
decays when wiggle stops: choppy wiggling does not escape jams.

Motion is massless admittance: twist = net force / damping, with the
commanded wrench slewed toward its target at rate stiffness/damping per
second (the impedance lag).  Commanded lateral forces also produce a tilt
moment through a short grip lever, which is how a teleoperator with only
f_x/f_y can wiggle the peg.

Everything is deterministic given (config, geom, seed, action sequence).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import HoleGeom, SimConfig, WiggleParams

# geometry of the conical lead-in, mm
CHAMFER_DEPTH = 1.5
CHAMFER_EXTRA = 3.0
# grip height converting commanded lateral force into tilt moment, mm
GRIP_LEVER = 10.0
# minimum tip depth before the mouth-edge contact is evaluated separately, mm
MOUTH_CONTACT_MIN = 0.05
# commanded |moment| that counts as active wiggle, N*mm
WIGGLE_ACTIVE_NMM = 5.0
# vibration build-up: rotation-under-load responds as
# (dwell/DWELL_FULL)^DWELL_POWER; dwell grows by 1 per wiggle tick and
# loses DWELL_DECAY per idle tick, so build-up needs a roughly 2:1 wiggle
# majority: sustained wiggle unlocks a jam, choppy wiggle stays locked
DWELL_FULL = 20.0
DWELL_CAP = 60.0
DWELL_DECAY = 2.0
DWELL_POWER = 2.0
# contact load (N) at which rotation counts as fully load-locked
ROT_LOCK_LOAD = 1.0
# per-contact penalty force saturation (keeps lip slams finite), N
CONTACT_FORCE_CAP = 200.0
# solver guardrails per tick
MAX_LIN_RATE = 50.0   # mm/s
MAX_ROT_RATE = 50.0   # deg/s
# commanded moments clip at this multiple of force_limit, N*mm
MOMENT_LIMIT_FACTOR = 10.0
# tip starts this far above the chamfer lip, mm
START_HEIGHT = 1.0


class SimFault(RuntimeError):
    """A state component became non-finite."""


@dataclass
class Wrench:
    f: np.ndarray  # N
    m: np.ndarray  # N*mm

    @staticmethod
    def zero() -> "Wrench":
        return Wrench(np.zeros(3), np.zeros(3))

    @staticmethod
    def from_vec6(v) -> "Wrench":
        v = np.asarray(v, dtype=np.float64)
        return Wrench(v[:3].copy(), v[3:6].copy())

    def vec6(self) -> np.ndarray:
        return np.concatenate([self.f, self.m])


@dataclass(frozen=True)
class EpisodeStatus:
    kind: str                 # "running" | "success" | "timeout"
    ticks: int | None = None

    @staticmethod
    def running() -> "EpisodeStatus":
        return EpisodeStatus("running")

    @staticmethod
    def success(ticks: int) -> "EpisodeStatus":
        return EpisodeStatus("success", ticks)

    @staticmethod
    def timeout() -> "EpisodeStatus":
        return EpisodeStatus("timeout")

    @property
    def terminal(self) -> bool:
        return self.kind != "running"


@dataclass
class PegState:
    pose: np.ndarray          # (x, y, z mm, rx, ry, rz deg); z is the tip height
    twist: np.ndarray         # (mm/s x3, deg/s x3)
    depth: float              # insertion progress into the bore, mm
    in_contact: bool
    contact_points: int       # 0, 1, or 2 (2 = rim+tip jamming)
    tick: int = 0
    wiggle_dwell: float = 0.0  # vibration build-up bookkeeping
    applied: np.ndarray | None = None  # controller force-slew state (6,)

    def __post_init__(self):
        self.pose = np.asarray(self.pose, dtype=np.float64)
        self.twist = np.asarray(self.twist, dtype=np.float64)
        if self.applied is None:
            self.applied = np.zeros(6)
        else:
            self.applied = np.asarray(self.applied, dtype=np.float64)

    def copy(self) -> "PegState":
        return replace(self, pose=self.pose.copy(), twist=self.twist.copy(),
                       applied=self.applied.copy())


@dataclass
class ContactInfo:
    force: np.ndarray      # net contact force on the peg, N
    moment: np.ndarray     # net contact moment about the tip, N*mm
    m_rot: np.ndarray      # moment from lateral force components only (righting channel)
    n_points: int
    load: float            # sum of normal-force magnitudes, N
    k_lin: np.ndarray | None = None   # per-axis contact stiffness, N/mm
    k_rot: np.ndarray | None = None   # per-axis rotational stiffness, N*mm/deg

    def __post_init__(self):
        if self.k_lin is None:
            self.k_lin = np.zeros(3)
        if self.k_rot is None:
            self.k_rot = np.zeros(3)


def _axis(pose: np.ndarray) -> np.ndarray:
    """Peg axis unit vector from (rx, ry, rz) in degrees, Rz Ry Rx order."""
    rx, ry, rz = np.radians(pose[3:6])
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    # Rz @ Ry @ Rx applied to (0, 0, 1)
    ax = cz * sy * cx + sz * sx
    ay = sz * sy * cx - cz * sx
    az = cy * cx
    return np.array([ax, ay, az])


def _contact_set(pose: np.ndarray, geom: HoleGeom) -> ContactInfo:
    rp = geom.peg_radius
    k = geom.wall_stiffness
    e = pose[:2]
    z = pose[2]
    contacts: list[tuple[np.ndarray, np.ndarray]] = []  # (point rel tip, force)
    n_points = 0

    if 0.0 < z < CHAMFER_DEPTH:
        # tip edge against the conical lead-in
        cone_r = geom.hole_radius + CHAMFER_EXTRA * (z / CHAMFER_DEPTH)
        r_lat = float(np.hypot(*e))
        pen = r_lat + rp - cone_r
        if pen > 0:
            u = e / r_lat if r_lat > 1e-12 else np.array([1.0, 0.0])
            slope = CHAMFER_EXTRA / CHAMFER_DEPTH
            normal = np.array([-u[0], -u[1], slope]) / np.hypot(1.0, slope)
            force = min(k * pen, CONTACT_FORCE_CAP) * normal
            point = np.array([u[0] * rp, u[1] * rp, 0.0])
            contacts.append((point, force))
            n_points = 1
    elif z <= 0.0:
        tip = None
        r_lat = float(np.hypot(*e))
        pen_tip = r_lat + rp - geom.hole_radius
        if pen_tip > 0 and r_lat > 1e-12:
            u_tip = e / r_lat
            f = -min(k * pen_tip, CONTACT_FORCE_CAP) * np.array([u_tip[0], u_tip[1], 0.0])
            point = np.array([u_tip[0] * (geom.hole_radius - r_lat),
                              u_tip[1] * (geom.hole_radius - r_lat), 0.0])
            tip = (point, f, pen_tip, u_tip)

        mouth = None
        h = -z
        if h > MOUTH_CONTACT_MIN:
            axis = _axis(pose)
            s = h / axis[2]
            em = e + s * axis[:2]
            rm = float(np.hypot(*em))
            pen_m = rm + rp - geom.hole_radius
            if pen_m > 0 and rm > 1e-12:
                u_m = em / rm
                f = -min(k * pen_m, CONTACT_FORCE_CAP) * np.array([u_m[0], u_m[1], 0.0])
                point = np.array([u_m[0] * geom.hole_radius - e[0],
                                  u_m[1] * geom.hole_radius - e[1], h])
                mouth = (point, f, pen_m, u_m)

        if tip and mouth:
            if float(tip[3] @ mouth[3]) < 0.0:
                # opposite walls: rim+tip jamming
                contacts = [(tip[0], tip[1]), (mouth[0], mouth[1])]
                n_points = 2
            else:
                # same side: one line-ish contact, keep the deeper end
                deeper = tip if tip[2] >= mouth[2] else mouth
                contacts = [(deeper[0], deeper[1])]
                n_points = 1
        elif tip or mouth:
            got = tip if tip else mouth
            contacts = [(got[0], got[1])]
            n_points = 1

    force = np.zeros(3)
    moment = np.zeros(3)
    m_rot = np.zeros(3)
    k_lin = np.zeros(3)
    k_rot = np.zeros(3)
    load = 0.0
    for point, f in contacts:
        force += f
        moment += np.cross(point, f)
        m_rot += np.cross(point, np.array([f[0], f[1], 0.0]))
        mag = float(np.linalg.norm(f))
        load += mag
        if mag > 0:
            n = f / mag
            # linearized spring stiffness seen along each axis / about each
            # rotation axis; used by step() for implicit integration
            k_lin += k * n * n
            lever = np.cross(point, n)
            k_rot += k * lever * lever * (np.pi / 180.0)
    return ContactInfo(force, moment, m_rot, n_points, load, k_lin, k_rot)


def contact_wrench(pose, geom: HoleGeom) -> tuple[Wrench, int]:
    """Penalty-spring contact wrench about the peg tip for a given pose.

    Pure function of pose: returns the position-determined normal forces
    and their moments.  Friction is velocity/load dependent and is applied
    inside step().
    """
    pose = np.asarray(pose, dtype=np.float64)
    if not np.all(np.isfinite(pose)):
        raise ValueError("pose must be finite")
    info = _contact_set(pose, geom)
    return Wrench(info.force, info.moment), info.n_points


def reset(config: SimConfig, geom: HoleGeom, seed: int) -> PegState:
    """Place the peg just above the hole with randomized offset and tilt."""
    config.validate()
    geom.validate()
    if config.start_offset_range > geom.hole_radius:
        raise ValueError("start_offset_range exceeds hole_radius; peg could miss the hole")
    rng = np.random.Generator(np.random.PCG64(seed))
    off = config.start_offset_range
    tilt = config.start_tilt_range
    x = rng.uniform(-off, off)
    y = rng.uniform(-off, off)
    rx = rng.uniform(-tilt, tilt)
    ry = rng.uniform(-tilt, tilt)
    pose = np.array([x, y, CHAMFER_DEPTH + START_HEIGHT, rx, ry, 0.0])
    return PegState(pose=pose, twist=np.zeros(6), depth=0.0,
                    in_contact=False, contact_points=0)


def decode_action(a: int, tick: int, amp: WiggleParams,
                  rng: np.random.Generator) -> Wrench:
    """Map a discrete action code to a target wrench.

    0: down + wiggle, 1: down only, 2: wiggle only, 3: nothing.  Wiggle is
    a fresh uniform +/- amp moment on roll/pitch/yaw each tick; the tick
    argument is accepted for interface stability but unused (the wiggle is
    phase-free by design).
    """
    if a not in (0, 1, 2, 3):
        raise ValueError(f"action code {a!r} out of range 0-3")
    f = np.zeros(3)
    m = np.zeros(3)
    if a in (0, 1):
        f[2] = -amp.f_down
    if a in (0, 2):
        m[:] = rng.uniform(-amp.amp, amp.amp, 3)
    return Wrench(f, m)


def check_termination(state: PegState, tick: int, config: SimConfig,
                      geom: HoleGeom) -> EpisodeStatus:
    if tick > config.max_ticks:
        raise ValueError("tick beyond max_ticks")
    if state.depth >= geom.hole_depth:
        return EpisodeStatus.success(tick)
    if tick == config.max_ticks:
        return EpisodeStatus.timeout()
    return EpisodeStatus.running()


def _shrink(v: np.ndarray | float, bound: float):
    """Coulomb deadband: remove up to `bound` of magnitude, keep the sign."""
    return np.sign(v) * np.maximum(np.abs(v) - bound, 0.0)


def step(state: PegState, target: Wrench, config: SimConfig, geom: HoleGeom,
         rng: np.random.Generator) -> tuple[PegState, Wrench, EpisodeStatus]:
    """Advance one tick under a target wrench; returns (state, sensed, status)."""
    if check_termination(state, state.tick, config, geom).terminal:
        raise ValueError("cannot step a terminated episode")
    dt = config.dt
    stiff = np.asarray(config.impedance_stiffness)
    damp = np.asarray(config.impedance_damping)

    # command clipping and the impedance slew toward the target
    cmd = np.concatenate([
        np.clip(target.f, -config.force_limit, config.force_limit),
        np.clip(target.m, -MOMENT_LIMIT_FACTOR * config.force_limit,
                MOMENT_LIMIT_FACTOR * config.force_limit),
    ])
    beta = np.clip(stiff * dt / damp, 0.0, 1.0)
    applied = state.applied + beta * (cmd - state.applied)

    # lateral force couples into tilt moment through the grip lever
    m_eff = applied[3:] + GRIP_LEVER * np.array([-applied[1], applied[0], 0.0])
    f_eff = applied[:3].copy()
    if not config.gravity_compensated:
        f_eff[2] -= config.peg_weight

    info = _contact_set(state.pose, geom)
    mu = geom.friction_coeff

    # vibration build-up, driven by the raw commanded moments (the policy's
    # intent, including the lateral-force lever coupling)
    m_cmd_raw = cmd[3:] + GRIP_LEVER * np.array([-cmd[1], cmd[0], 0.0])
    wiggling = float(np.max(np.abs(m_cmd_raw))) >= WIGGLE_ACTIVE_NMM
    dwell = min(DWELL_CAP, state.wiggle_dwell + 1.0) if wiggling \
        else max(0.0, state.wiggle_dwell - DWELL_DECAY)
    melt = float(np.clip(dwell / DWELL_FULL, 0.0, 1.0)) ** DWELL_POWER

    # linear: net force through damping, vertical static friction deadband.
    # Contact springs integrate implicitly (denominator gains k*dt), which
    # keeps the stiff penalty stable at the 100 Hz tick.
    f_net = f_eff + info.force
    f_net[2] = _shrink(f_net[2], mu * info.load)
    v_lin = f_net / (damp[:3] + info.k_lin * dt)

    # rotation: an unloaded peg rotates freely under commanded moments; a
    # loaded one is locked except through vibration, which admits both the
    # commanded dither and the righting moment from the walls in proportion
    # to the build-up
    locked = float(np.clip(info.load / ROT_LOCK_LOAD, 0.0, 1.0))
    m_drive = (1.0 - locked) * m_eff + locked * melt * (m_eff + info.m_rot)
    v_rot = m_drive / (damp[3:] + info.k_rot * dt)

    twist = np.concatenate([
        np.clip(v_lin, -MAX_LIN_RATE, MAX_LIN_RATE),
        np.clip(v_rot, -MAX_ROT_RATE, MAX_ROT_RATE),
    ])
    pose = state.pose + twist * dt
    if -pose[2] > geom.hole_depth:
        pose[2] = -geom.hole_depth
    depth = float(np.clip(-pose[2], 0.0, geom.hole_depth))

    noise = rng.normal(0.0, 1.0, 6) * config.sensor_noise
    sensed = Wrench(info.force + noise[:3], info.moment + noise[3:])

    post = _contact_set(pose, geom)
    new_state = PegState(pose=pose, twist=twist, depth=depth,
                         in_contact=post.n_points > 0,
                         contact_points=post.n_points,
                         tick=state.tick + 1, wiggle_dwell=dwell,
                         applied=applied)
    if not (np.all(np.isfinite(pose)) and np.all(np.isfinite(twist))):
        raise SimFault(f"non-finite state at tick {new_state.tick}")
    status = check_termination(new_state, new_state.tick, config, geom)
    return new_state, sensed, status
