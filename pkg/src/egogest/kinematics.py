"""Synthetic gesture sessions: seeded head and eye motion with labels.

Each 15 s session embeds a few non-overlapping instances of one gesture
class in a neutral background. Head motion is a continuous-time script
(rotation angles about the camera axes plus a forward translation
channel) sampled at the requested frame rate; the outward camera then
observes a static plane, so every frame pair induces an exact pinhole
homography which is optionally re-estimated from noise-perturbed point
correspondences. The eye camera is modeled as global similarity motion
(scale, rotation, 2D translation) weakly coupled to the head channels.

Class signatures (axis conventions as in geometry.py):
  NoddingHead  rx sinusoid, contiguous cycles
  ShakingHead  ry sinusoid
  Maybe        rz sinusoid, slower
  ComeHere     rx pulses separated by clear gaps
  Surprise     one short backward pulse (tz with some rx) plus an
               eye-image scale pulse (eyes opening wide)
  Neutral      mean-reverting drift, occasional eye blinks

Instance placement and per-instance parameters are drawn in continuous
time before any per-frame sampling, so the same seed yields matching
scripts at every frame rate (noise terms are per-frame and therefore
rate-specific).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from .errors import IncompatibleRate
from .geometry import (
    EYE_INTRINSICS,
    WORLD_INTRINSICS,
    Correspondence,
    Homography,
    RigidMotion,
    apply_many,
    compose,
    estimate_homography_dlt,
    from_param8,
    homography_from_motion,
    to_param8,
)

VALID_FRAME_RATES = (10, 20, 30, 60)


class GestureClass(IntEnum):
    NEUTRAL = 0
    COME_HERE = 1
    NODDING_HEAD = 2
    SHAKING_HEAD = 3
    MAYBE = 4
    SURPRISE = 5


CLASS_NAMES = {
    GestureClass.NEUTRAL: "Neutral",
    GestureClass.COME_HERE: "ComeHere",
    GestureClass.NODDING_HEAD: "NoddingHead",
    GestureClass.SHAKING_HEAD: "ShakingHead",
    GestureClass.MAYBE: "Maybe",
    GestureClass.SURPRISE: "Surprise",
}
NAME_TO_CLASS = {v: k for k, v in CLASS_NAMES.items()}

NON_NEUTRAL = (
    GestureClass.COME_HERE,
    GestureClass.NODDING_HEAD,
    GestureClass.SHAKING_HEAD,
    GestureClass.MAYBE,
    GestureClass.SURPRISE,
)


@dataclass(frozen=True)
class ActorProfile:
    actor_id: int
    amplitude_scale: float = 1.0
    frequency_scale: float = 1.0
    noise_sigma: float = 0.002  # rad/frame drift innovation
    timing_jitter: float = 0.1  # fraction of nominal durations

    def __post_init__(self):
        if not (0.5 <= self.amplitude_scale <= 2.0):
            raise ValueError("amplitude_scale must lie in [0.5, 2.0]")
        if not (0.5 <= self.frequency_scale <= 2.0):
            raise ValueError("frequency_scale must lie in [0.5, 2.0]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class SceneProfile:
    kind: str  # "indoor" | "outdoor"
    plane_depth: float  # meters
    correspondence_noise: float  # px, base sigma for DLT input noise

    def __post_init__(self):
        if self.kind not in ("indoor", "outdoor"):
            raise ValueError("scene kind must be indoor or outdoor")
        if self.plane_depth <= 0:
            raise ValueError("plane_depth must be > 0")
        if self.correspondence_noise < 0:
            raise ValueError("correspondence_noise must be >= 0")


def default_actors() -> list[ActorProfile]:
    return [
        ActorProfile(0, amplitude_scale=1.0, frequency_scale=1.0, noise_sigma=0.002, timing_jitter=0.10),
        ActorProfile(1, amplitude_scale=1.2, frequency_scale=0.9, noise_sigma=0.0025, timing_jitter=0.15),
        ActorProfile(2, amplitude_scale=0.85, frequency_scale=1.1, noise_sigma=0.0015, timing_jitter=0.12),
        ActorProfile(3, amplitude_scale=1.1, frequency_scale=1.2, noise_sigma=0.003, timing_jitter=0.20),
    ]


def default_scenes() -> list[SceneProfile]:
    # distant scenes give noisier small-parallax estimates
    return [
        SceneProfile("indoor", plane_depth=1.5, correspondence_noise=0.3),
        SceneProfile("outdoor", plane_depth=20.0, correspondence_noise=0.5),
    ]


@dataclass(frozen=True)
class GeneratorConfig:
    """Kinematic constants of the synthetic gestures (all tunable)."""

    session_len: float = 15.0
    margin: float = 0.5  # quiet time at both session ends
    min_gap: float = 0.8  # minimum neutral time between instances
    envelope_ramp: float = 0.15
    label_threshold: float = 0.1  # fraction of envelope peak that still counts

    nod_amp: float = 0.20
    nod_freq: float = 2.0
    shake_amp: float = 0.25
    shake_freq: float = 2.0
    maybe_amp: float = 0.20
    maybe_freq: float = 1.0
    comehere_amp: float = 0.25
    comehere_pulse: float = 0.5
    comehere_gap: tuple[float, float] = (0.7, 1.2)
    surprise_rx: float = 0.10
    surprise_tz_frac: float = 0.05  # fraction of plane depth
    surprise_len: float = 0.4
    surprise_eye_scale: float = 1.15

    drift_timescale: float = 1.0  # seconds, mean reversion of neutral drift
    blink_rate: float = 0.25  # blinks per second in neutral background
    blink_len: float = 0.15
    blink_ey_px: float = 4.0

    eye_couple_px_per_rad: float = 4.0  # head rotation -> eye-image translation
    eye_couple_rot: float = 0.2  # head roll -> eye-image torsion
    eye_noise_trans_px: float = 0.3
    eye_noise_log_scale: float = 0.0008
    eye_noise_rot: float = 0.001

    blur_disp_px: float = 12.0  # displacement where estimation noise doubles
    blur_max_factor: float = 8.0
    grid_cols: int = 4
    grid_rows: int = 3


DEFAULT_GENERATOR = GeneratorConfig()


@dataclass(frozen=True)
class InstanceSpec:
    """One drawn gesture instance in continuous time (relative to its start)."""

    cls: GestureClass
    duration: float
    amp: float
    freq: float = 0.0
    pulse_starts: tuple[float, ...] = ()
    pulse_len: float = 0.0


@dataclass
class ScriptTrack:
    """Per-frame motion script plus labels for one time window."""

    frame_rate: int
    rx: np.ndarray
    ry: np.ndarray
    rz: np.ndarray
    tz_frac: np.ndarray  # forward translation as a fraction of plane depth
    eye_log_scale: np.ndarray
    eye_tx: np.ndarray  # px
    eye_ty: np.ndarray  # px
    eye_rot: np.ndarray
    labels: np.ndarray
    instances: list[tuple[float, float]] = field(default_factory=list)

    def __len__(self):
        return len(self.rx)


@dataclass
class LabeledSequence:
    """One synthesized session: frame-pair motions for both channels.

    world_p8[k] / eye_p8[k] hold the canonical 8 parameters of the
    homography mapping frame k-1 to frame k (identity at k = 0).
    """

    seq_id: str
    frame_rate: int
    actor_id: int
    scene: str
    gesture: int
    seed: int
    world_p8: np.ndarray  # (L, 8)
    eye_p8: np.ndarray  # (L, 8)
    labels: np.ndarray  # (L,)
    n_instances: int = 0  # scripted gesture repetitions in this session

    def __post_init__(self):
        if self.frame_rate not in VALID_FRAME_RATES:
            raise ValueError(f"frame_rate must be one of {VALID_FRAME_RATES}")
        if not (len(self.world_p8) == len(self.eye_p8) == len(self.labels)):
            raise ValueError("per-frame arrays must have equal lengths")
        if not (np.all(np.isfinite(self.world_p8)) and np.all(np.isfinite(self.eye_p8))):
            raise ValueError("non-finite motion parameters")

    def __len__(self):
        return len(self.labels)


def _bump(u: np.ndarray) -> np.ndarray:
    """Smooth one-sided pulse on [0, 1]: sin^2(pi u), zero outside."""
    out = np.zeros_like(u)
    mask = (u >= 0.0) & (u <= 1.0)
    out[mask] = np.sin(np.pi * u[mask]) ** 2
    return out


def _envelope(tau: np.ndarray, duration: float, ramp: float) -> np.ndarray:
    inside = (tau >= 0.0) & (tau <= duration)
    e = np.zeros_like(tau)
    e[inside] = np.minimum(
        1.0, np.minimum(tau[inside] / ramp, (duration - tau[inside]) / ramp)
    )
    return np.clip(e, 0.0, 1.0)


def draw_instance(
    cls: GestureClass,
    actor: ActorProfile,
    rng: np.random.Generator,
    cfg: GeneratorConfig = DEFAULT_GENERATOR,
    compact: bool = False,
) -> InstanceSpec:
    """Draw one gesture instance; `compact` forces the shortest variant."""
    jit = 1.0 + actor.timing_jitter * rng.uniform(-1.0, 1.0)
    amp = actor.amplitude_scale
    freq = actor.frequency_scale

    if cls == GestureClass.NODDING_HEAD:
        f = cfg.nod_freq * freq * jit
        cycles = 2.0 if compact else float(rng.choice([2, 3]))
        return InstanceSpec(cls, cycles / f, cfg.nod_amp * amp, f)
    if cls == GestureClass.SHAKING_HEAD:
        f = cfg.shake_freq * freq * jit
        cycles = 2.0 if compact else float(rng.choice([2, 3]))
        return InstanceSpec(cls, cycles / f, cfg.shake_amp * amp, f)
    if cls == GestureClass.MAYBE:
        f = cfg.maybe_freq * freq * jit
        cycles = 1.5 if compact else float(rng.choice([1.5, 2.0]))
        return InstanceSpec(cls, cycles / f, cfg.maybe_amp * amp, f)
    if cls == GestureClass.COME_HERE:
        n_pulses = 2 if compact else (2 if rng.random() < 0.6 else 3)
        pulse = cfg.comehere_pulse * jit / freq
        gaps = rng.uniform(*cfg.comehere_gap, size=max(n_pulses - 1, 0))
        starts = [0.0]
        for gap in gaps:
            starts.append(starts[-1] + pulse + gap)
        return InstanceSpec(
            cls,
            starts[-1] + pulse,
            cfg.comehere_amp * amp,
            pulse_starts=tuple(starts),
            pulse_len=pulse,
        )
    if cls == GestureClass.SURPRISE:
        dur = cfg.surprise_len * jit
        return InstanceSpec(cls, dur, amp)
    raise ValueError(f"cannot draw an instance of {cls!r}")


def _add_instance(track: ScriptTrack, spec: InstanceSpec, t0: float,
                  cfg: GeneratorConfig) -> None:
    """Add one instance's motion and labels.

    Frames are labeled where the scripted amplitude envelope reaches
    label_threshold of its peak: the whole trapezoid window for the
    oscillating classes, each pulse envelope for the pulse classes
    (the near-still gaps between pulses stay neutral).
    """
    t = np.arange(len(track)) / track.frame_rate
    tau = t - t0
    env = _envelope(tau, spec.duration, cfg.envelope_ramp)
    cls = spec.cls
    if cls == GestureClass.NODDING_HEAD:
        track.rx += spec.amp * np.sin(2.0 * np.pi * spec.freq * tau) * env
        label_env = env
    elif cls == GestureClass.SHAKING_HEAD:
        track.ry += spec.amp * np.sin(2.0 * np.pi * spec.freq * tau) * env
        label_env = env
    elif cls == GestureClass.MAYBE:
        track.rz += spec.amp * np.sin(2.0 * np.pi * spec.freq * tau) * env
        label_env = env
    elif cls == GestureClass.COME_HERE:
        sig = np.zeros_like(tau)
        for start in spec.pulse_starts:
            sig += _bump((tau - start) / spec.pulse_len)
        track.rx += spec.amp * sig
        label_env = sig
    elif cls == GestureClass.SURPRISE:
        shape = _bump(tau / spec.duration)
        track.rx += -cfg.surprise_rx * spec.amp * shape
        track.tz_frac += -cfg.surprise_tz_frac * spec.amp * shape
        track.eye_log_scale += np.log(cfg.surprise_eye_scale) * spec.amp * shape
        label_env = shape
    track.labels[label_env >= cfg.label_threshold] = int(cls)
    track.instances.append((t0, spec.duration))


def _empty_track(n_frames: int, frame_rate: int) -> ScriptTrack:
    chans = [np.zeros(n_frames) for _ in range(8)]
    return ScriptTrack(
        frame_rate=frame_rate,
        rx=chans[0], ry=chans[1], rz=chans[2], tz_frac=chans[3],
        eye_log_scale=chans[4], eye_tx=chans[5], eye_ty=chans[6], eye_rot=chans[7],
        labels=np.zeros(n_frames, dtype=np.int64),
    )


def _finish_track(track: ScriptTrack, actor: ActorProfile, rng: np.random.Generator,
                  cfg: GeneratorConfig, gesture_windows: list[tuple[float, float]]) -> None:
    """Add neutral drift, eye coupling and blinks on top of the gestures."""
    n = len(track)
    f = track.frame_rate
    if actor.noise_sigma > 0:
        rho = np.exp(-1.0 / (cfg.drift_timescale * f))
        for chan in (track.rx, track.ry, track.rz):
            eps = rng.normal(0.0, actor.noise_sigma, size=n)
            drift = np.empty(n)
            acc = 0.0
            for k in range(n):
                acc = rho * acc + eps[k]
                drift[k] = acc
            chan += drift

    # weak vestibular coupling of the eye image to head motion
    track.eye_tx += cfg.eye_couple_px_per_rad * track.ry
    track.eye_ty += cfg.eye_couple_px_per_rad * track.rx
    track.eye_rot += cfg.eye_couple_rot * track.rz

    if actor.noise_sigma > 0 and cfg.blink_rate > 0:
        n_blinks = rng.poisson(cfg.blink_rate * (n / f))
        starts = np.sort(rng.uniform(0.0, n / f - cfg.blink_len, size=n_blinks))
        t = np.arange(n) / f
        for tb in starts:
            if any(t0 - cfg.blink_len < tb < t0 + dur for t0, dur in gesture_windows):
                continue
            track.eye_ty += cfg.blink_ey_px * _bump((t - tb) / cfg.blink_len)


def gesture_script(
    cls: GestureClass,
    actor: ActorProfile,
    duration: float,
    seed: int,
    frame_rate: int = 20,
    config: GeneratorConfig = DEFAULT_GENERATOR,
) -> ScriptTrack:
    """One gesture instance (or plain neutral) over a `duration`-second window."""
    if duration <= 0:
        raise ValueError("duration must be > 0")
    rng = np.random.default_rng(seed)
    n = int(round(duration * frame_rate))
    track = _empty_track(n, frame_rate)
    if cls != GestureClass.NEUTRAL:
        spec = draw_instance(cls, actor, rng, config)
        t0 = max(0.0, (duration - spec.duration) / 2.0)
        _add_instance(track, spec, t0, config)
    _finish_track(track, actor, rng, config, track.instances)
    return track


def _similarity_matrix(log_s: float, rot: float, tx: float, ty: float,
                       cx: float, cy: float) -> np.ndarray:
    """Similarity about the image center plus a translation, as 3x3."""
    s = np.exp(log_s)
    c, sn = np.cos(rot), np.sin(rot)
    a = np.array([[s * c, -s * sn], [s * sn, s * c]])
    center = np.array([cx, cy])
    b = center + np.array([tx, ty]) - a @ center
    m = np.eye(3)
    m[:2, :2] = a
    m[:2, 2] = b
    return m


def _grid_points(intr, cfg: GeneratorConfig) -> np.ndarray:
    xs = np.linspace(0.1 * intr.width, 0.9 * intr.width, cfg.grid_cols)
    ys = np.linspace(0.1 * intr.height, 0.9 * intr.height, cfg.grid_rows)
    return np.array([(x, y) for y in ys for x in xs])


def _corner_displacement(h: Homography, intr) -> float:
    corners = np.array(
        [(0.0, 0.0), (intr.width, 0.0), (0.0, intr.height), (intr.width, intr.height)]
    )
    return float(np.abs(apply_many(h, corners) - corners).mean())


def track_to_sequence(
    track: ScriptTrack,
    scene: SceneProfile,
    rng: np.random.Generator,
    noise_scale: float = 1.0,
    cfg: GeneratorConfig = DEFAULT_GENERATOR,
    seq_id: str = "seq",
    actor_id: int = 0,
    gesture: int = 0,
    seed: int = 0,
) -> LabeledSequence:
    """Render a motion script into frame-pair homography parameters."""
    n = len(track)
    world_k = WORLD_INTRINSICS
    eye_k = EYE_INTRINSICS
    grid = _grid_points(world_k, cfg)

    # absolute pose-from-rest homographies for the world camera
    pose = [
        homography_from_motion(
            world_k,
            RigidMotion(rx=track.rx[k], ry=track.ry[k], rz=track.rz[k],
                        tz=track.tz_frac[k] * scene.plane_depth),
            plane_depth=scene.plane_depth,
        )
        for k in range(n)
    ]
    eye_state = [
        _similarity_matrix(track.eye_log_scale[k], track.eye_rot[k],
                           track.eye_tx[k], track.eye_ty[k], eye_k.cx, eye_k.cy)
        for k in range(n)
    ]

    world_p8 = np.zeros((n, 8))
    eye_p8 = np.zeros((n, 8))
    world_p8[0] = to_param8(Homography.identity())
    eye_p8[0] = world_p8[0]
    base_sigma = scene.correspondence_noise * noise_scale
    for k in range(1, n):
        h = compose(pose[k], pose[k - 1].inverse())
        if base_sigma > 0:
            # larger inter-frame displacement degrades the estimate
            # (motion blur / large-baseline effect)
            disp = _corner_displacement(h, world_k)
            sigma = base_sigma * min(
                1.0 + (disp / cfg.blur_disp_px) ** 2, cfg.blur_max_factor
            )
            dst = apply_many(h, grid) + rng.normal(0.0, sigma, size=grid.shape)
            h = estimate_homography_dlt(
                [Correspondence(tuple(s), tuple(d)) for s, d in zip(grid, dst)]
            )
        world_p8[k] = to_param8(h)

        e = Homography(eye_state[k] @ np.linalg.inv(eye_state[k - 1]))
        if noise_scale > 0:
            wobble = _similarity_matrix(
                rng.normal(0.0, cfg.eye_noise_log_scale * noise_scale),
                rng.normal(0.0, cfg.eye_noise_rot * noise_scale),
                rng.normal(0.0, cfg.eye_noise_trans_px * noise_scale),
                rng.normal(0.0, cfg.eye_noise_trans_px * noise_scale),
                eye_k.cx, eye_k.cy,
            )
            e = Homography(wobble @ e.m)
        eye_p8[k] = to_param8(e)

    return LabeledSequence(
        seq_id=seq_id,
        frame_rate=track.frame_rate,
        actor_id=actor_id,
        scene=scene.kind,
        gesture=gesture,
        seed=seed,
        world_p8=world_p8,
        eye_p8=eye_p8,
        labels=track.labels.copy(),
        n_instances=len(track.instances),
    )


def synthesize_session(
    cls: GestureClass,
    actor: ActorProfile,
    scene: SceneProfile,
    frame_rate: int = 20,
    seed: int = 0,
    n_instances: int | None = None,
    config: GeneratorConfig = DEFAULT_GENERATOR,
    noise_scale: float = 1.0,
    seq_id: str | None = None,
) -> LabeledSequence:
    """One 15 s session: several instances of `cls` on neutral background."""
    if cls == GestureClass.NEUTRAL:
        raise ValueError("sessions are built around a non-neutral gesture class")
    if frame_rate not in VALID_FRAME_RATES:
        raise ValueError(f"frame_rate must be one of {VALID_FRAME_RATES}")
    rng = np.random.default_rng(seed)
    n = n_instances if n_instances is not None else int(rng.choice([3, 4]))

    cfg = config
    for attempt in range(3):
        compact = attempt > 0
        count = max(1, n - 1) if attempt == 2 else n
        specs = [draw_instance(cls, actor, rng, cfg, compact=compact) for _ in range(count)]
        total = sum(s.duration for s in specs)
        slack = cfg.session_len - 2 * cfg.margin - (count - 1) * cfg.min_gap - total
        if slack > 0.1:
            break
    else:
        raise ValueError("gesture instances do not fit in the session window")

    weights = rng.random(count + 1)
    extras = slack * weights / weights.sum()
    n_frames = int(round(cfg.session_len * frame_rate))
    track = _empty_track(n_frames, frame_rate)
    cursor = cfg.margin + extras[0]
    for i, spec in enumerate(specs):
        _add_instance(track, spec, cursor, cfg)
        cursor += spec.duration + cfg.min_gap + extras[i + 1]
    _finish_track(track, actor, rng, cfg, track.instances)

    return track_to_sequence(
        track, scene, rng, noise_scale=noise_scale, cfg=cfg,
        seq_id=seq_id or f"{CLASS_NAMES[cls].lower()}_{seed}",
        actor_id=actor.actor_id, gesture=int(cls), seed=seed,
    )


def _instance_count_template(n_sessions: int, rng: np.random.Generator) -> np.ndarray:
    """Per-session instance counts whose class total stays in [25, 32]."""
    if n_sessions == 8:
        counts = np.array([3, 4] * 4)
    elif n_sessions == 10:
        counts = np.array([3] * 8 + [4] * 2)
    else:
        counts = np.array([3, 4] * (n_sessions // 2 + 1))[:n_sessions]
    return rng.permutation(counts)


def synthesize_dataset(
    actors: list[ActorProfile] | None = None,
    scenes: list[SceneProfile] | None = None,
    frame_rate: int = 20,
    seed: int = 0,
    classes: tuple[GestureClass, ...] | None = None,
    sessions_per_actor: int = 10,
    config: GeneratorConfig = DEFAULT_GENERATOR,
    noise_scale: float = 1.0,
) -> list[LabeledSequence]:
    """Full dataset: `sessions_per_actor` sessions per actor, balanced over
    the non-neutral classes and over indoor/outdoor scenes."""
    actors = actors if actors is not None else default_actors()
    scenes = scenes if scenes is not None else default_scenes()
    if not actors:
        raise ValueError("need at least one actor")
    classes = tuple(classes) if classes is not None else NON_NEUTRAL
    indoor = [s for s in scenes if s.kind == "indoor"]
    outdoor = [s for s in scenes if s.kind == "outdoor"]
    if not indoor or not outdoor:
        raise ValueError("need both an indoor and an outdoor scene")
    if indoor[0].plane_depth >= outdoor[0].plane_depth:
        raise ValueError("indoor plane depth must be smaller than outdoor")

    meta_rng = np.random.default_rng(np.random.SeedSequence([seed, len(classes)]))
    templates = {
        cls: list(_instance_count_template(
            len(actors) * sessions_per_actor // len(classes), meta_rng))
        for cls in classes
    }

    sequences = []
    idx = 0
    for a_i, actor in enumerate(actors):
        for s_i in range(sessions_per_actor):
            cls = classes[(s_i + a_i) % len(classes)]
            scene = indoor[0] if s_i < sessions_per_actor // 2 else outdoor[0]
            counts = templates[cls]
            n_inst = int(counts.pop(0)) if counts else None
            session_seed = int(np.random.SeedSequence([seed, idx]).generate_state(1)[0])
            sequences.append(
                synthesize_session(
                    cls, actor, scene, frame_rate=frame_rate, seed=session_seed,
                    n_instances=n_inst, config=config, noise_scale=noise_scale,
                    seq_id=f"seq{idx:03d}_{CLASS_NAMES[cls].lower()}_a{actor.actor_id}_{scene.kind}",
                )
            )
            idx += 1
    return sequences


def downsample_rate(seq: LabeledSequence, target_fps: int) -> LabeledSequence:
    """Keep every (rate/target)-th frame, composing the skipped frame pairs."""
    if target_fps not in VALID_FRAME_RATES or seq.frame_rate % target_fps != 0:
        raise IncompatibleRate(
            f"target {target_fps} fps does not divide source {seq.frame_rate} fps"
        )
    step = seq.frame_rate // target_fps
    if step == 1:
        return replace(
            seq,
            world_p8=seq.world_p8.copy(),
            eye_p8=seq.eye_p8.copy(),
            labels=seq.labels.copy(),
        )
    n_new = (len(seq) - 1) // step + 1
    world = np.zeros((n_new, 8))
    eye = np.zeros((n_new, 8))
    world[0] = to_param8(Homography.identity())
    eye[0] = world[0]
    for k in range(1, n_new):
        hw = from_param8(seq.world_p8[(k - 1) * step + 1])
        he = from_param8(seq.eye_p8[(k - 1) * step + 1])
        for j in range((k - 1) * step + 2, k * step + 1):
            hw = compose(from_param8(seq.world_p8[j]), hw)
            he = compose(from_param8(seq.eye_p8[j]), he)
        world[k] = to_param8(hw)
        eye[k] = to_param8(he)
    return replace(
        seq,
        frame_rate=target_fps,
        world_p8=world,
        eye_p8=eye,
        labels=seq.labels[::step].copy(),
    )
