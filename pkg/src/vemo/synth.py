"""Synthetic telemetry: a nonlinear single-track vehicle and scripted maneuvers.

The simulator integrates body-frame longitudinal velocity ``vx``, lateral
velocity ``vy`` and yaw rate ``r`` with fixed-step RK4. Controls are held
constant over each sample interval; the record at sample ``n`` pairs the
control issued at ``n`` with the state reached at ``n``, whose accelerations
reflect the control held over the previous interval.
"""
from dataclasses import dataclass, field, asdict
import json
import math

import numpy as np

from .channels import N_STATES
from .data import SAMPLE_RATE_HZ, Run, is_at_rest, validate_standstill
from .errors import DomainError

KMH = 3.6
FAMILIES = ("accelerate", "sine_steer", "brake", "cruise")
MIN_SCRIPT_S = 30.0
_STOP_BRAKE_S = 8.0
_STOP_IDLE_S = 3.0
_START_IDLE_S = 2.0


@dataclass(frozen=True)
class SingleTrackParams:
    """Vehicle constants, defaults sized to a GT3-like car (top speed near 280 km/h)."""

    mass: float = 1300.0                  # kg
    yaw_inertia: float = 1900.0           # kg m^2
    lf: float = 1.2                       # CoG to front axle, m
    lr: float = 1.5                       # CoG to rear axle, m
    cornering_front: float = 90000.0      # N/rad
    cornering_rear: float = 120000.0      # N/rad
    lateral_cap_front: float = 10625.0    # N, saturation level of the front axle force
    lateral_cap_rear: float = 8500.0      # N
    drive_force: float = 3800.0           # N at 100 % throttle and unit gear ratio
    brake_force: float = 16000.0          # N at 100 % brake
    drag: float = 0.5                     # N / (m/s)^2
    gear_ratios: tuple = (2.2, 1.75, 1.4, 1.15, 0.95, 0.8)
    steering_ratio: float = 12.0          # steering-wheel deg per road-wheel deg
    # low-speed regularisation
    slip_speed_floor: float = 3.0         # m/s, smooths the slip-angle denominator
    tire_fade_speed: float = 2.0          # m/s, lateral forces fade in above this
    brake_rest_speed: float = 0.5         # m/s, brake force fades to 0 at rest
    rest_damping: float = 5.0             # 1/s, damps vy and r at standstill

    def __post_init__(self):
        object.__setattr__(self, "gear_ratios", tuple(float(g) for g in self.gear_ratios))
        values = {k: v for k, v in asdict(self).items() if k != "gear_ratios"}
        bad = [k for k, v in values.items() if not (v > 0 and math.isfinite(v))]
        if bad or len(self.gear_ratios) != 6 or min(self.gear_ratios) <= 0:
            raise ValueError(f"vehicle parameters must be positive (bad: {bad or 'gear_ratios'})")

    @property
    def wheelbase(self):
        return self.lf + self.lr


def derivatives(p, state, control):
    """Time derivative of ``(vx, vy, r)`` plus body accelerations ``(ax, ay)``.

    ``control`` is ``(u_t, u_b, u_s, u_g)`` in telemetry units.
    """
    vx, vy, r = state
    u_t, u_b, u_s, u_g = control
    delta = math.radians(u_s / p.steering_ratio)
    fade = math.tanh(vx / p.tire_fade_speed)
    ve = math.sqrt(vx * vx + p.slip_speed_floor ** 2)
    alpha_f = delta - (vy + p.lf * r) / ve
    alpha_r = -(vy - p.lr * r) / ve
    fyf = fade * p.lateral_cap_front * math.tanh(p.cornering_front * alpha_f / p.lateral_cap_front)
    fyr = fade * p.lateral_cap_rear * math.tanh(p.cornering_rear * alpha_r / p.lateral_cap_rear)
    ratio = p.gear_ratios[int(round(u_g)) - 1]
    fx = (
        u_t / 100.0 * p.drive_force * ratio
        - u_b / 100.0 * p.brake_force * math.tanh(vx / p.brake_rest_speed)
        - p.drag * vx * abs(vx)
    )
    sd, cd = math.sin(delta), math.cos(delta)
    still = p.rest_damping * (1.0 - fade)
    ax = (fx - fyf * sd) / p.mass
    ay = (fyf * cd + fyr) / p.mass - still * vy
    dr = (p.lf * fyf * cd - p.lr * fyr) / p.yaw_inertia - still * r
    return (ax + vy * r, ay - vx * r, dr), (ax, ay)


def _rk4(p, s, u, h):
    def f(x):
        return np.array(derivatives(p, x, u)[0])

    k1 = f(s)
    k2 = f(s + 0.5 * h * k1)
    k3 = f(s + 0.5 * h * k2)
    k4 = f(s + h * k3)
    return s + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# ---------------------------------------------------------------------------
# maneuver scripts

@dataclass(frozen=True)
class Segment:
    """One piece of a control schedule.

    Throttle and brake ramp linearly from their first to second value; the
    steering angle is ``steer_offset + steer_amp * sin(2 pi steer_freq (t - start))``.
    """

    kind: str
    start: float
    duration: float
    gear: int = 1
    throttle: tuple = (0.0, 0.0)
    brake: tuple = (0.0, 0.0)
    steer_amp: float = 0.0
    steer_freq: float = 0.0
    steer_offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "throttle", tuple(float(v) for v in self.throttle))
        object.__setattr__(self, "brake", tuple(float(v) for v in self.brake))

    def check(self):
        problems = []
        if self.duration <= 0:
            problems.append("non-positive duration")
        if not all(0.0 <= v <= 100.0 for v in self.throttle + self.brake):
            problems.append("throttle/brake outside [0, 100]")
        if abs(self.steer_offset) + abs(self.steer_amp) >= 180.0:
            problems.append("steering outside (-180, 180)")
        if self.gear not in range(1, 7):
            problems.append("gear outside {1..6}")
        if self.steer_freq < 0:
            problems.append("negative steering frequency")
        if problems:
            raise DomainError(f"segment {self.kind}@{self.start}s: " + "; ".join(problems))

    @property
    def is_idle(self):
        return (
            self.throttle == (0.0, 0.0)
            and self.brake == (0.0, 0.0)
            and self.steer_amp == 0.0
            and self.steer_offset == 0.0
        )


@dataclass(frozen=True)
class ManeuverScript:
    segments: tuple
    seed: int = None

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def duration(self):
        return sum(s.duration for s in self.segments)

    @property
    def kinds(self):
        return [s.kind for s in self.segments]

    def validate(self):
        if not self.segments:
            raise DomainError("empty maneuver script")
        t = 0.0
        for seg in self.segments:
            seg.check()
            if abs(seg.start - t) > 1e-9:
                raise DomainError(f"segment {seg.kind} starts at {seg.start}s, expected {t}s")
            t += seg.duration
        if not (self.segments[0].is_idle and self.segments[-1].is_idle):
            raise DomainError("script must begin and end with all-zero controls")
        return self

    def controls(self, times):
        """Controls ``(u_t, u_b, u_s, u_g)`` at each time in ``times`` -> ``(T, 4)``."""
        times = np.asarray(times, dtype=np.float64)
        starts = np.array([s.start for s in self.segments])
        idx = np.clip(np.searchsorted(starts, times + 1e-9, side="right") - 1, 0, len(self.segments) - 1)
        out = np.zeros((times.size, 4))
        for i, seg in enumerate(self.segments):
            m = idx == i
            if not m.any():
                continue
            tau = times[m] - seg.start
            frac = np.clip(tau / seg.duration, 0.0, 1.0)
            out[m, 0] = seg.throttle[0] + (seg.throttle[1] - seg.throttle[0]) * frac
            out[m, 1] = seg.brake[0] + (seg.brake[1] - seg.brake[0]) * frac
            out[m, 2] = seg.steer_offset + seg.steer_amp * np.sin(2.0 * np.pi * seg.steer_freq * tau)
            out[m, 3] = seg.gear
        return out

    def to_json(self):
        return json.dumps(
            {"format": "vemo-maneuver-script", "version": 1, "seed": self.seed,
             "segments": [asdict(s) for s in self.segments]},
            indent=1,
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        if d.get("format") != "vemo-maneuver-script":
            raise ValueError("not a maneuver script file")
        return cls(tuple(Segment(**s) for s in d["segments"]), d.get("seed"))


def build_training_script(seed, duration, families=FAMILIES):
    """Randomised maneuver mix bracketed by standstill.

    Families are visited in shuffled rounds so every family appears before
    any repeats. Steering sines run whole cycles at 0.2-2 Hz so they end at
    zero; the script closes with a hard stop and an idle tail.
    """
    if duration < MIN_SCRIPT_S:
        raise ValueError(f"script duration must be >= {MIN_SCRIPT_S} s, got {duration}")
    families = tuple(families)
    if not families or any(f not in FAMILIES for f in families):
        raise ValueError(f"families must be drawn from {FAMILIES}")
    rng = np.random.default_rng(seed)
    segs = [Segment("idle", 0.0, _START_IDLE_S)]
    t = _START_IDLE_S
    budget_end = duration - _STOP_BRAKE_S - _STOP_IDLE_S
    gear = 1
    queue = []

    def push(seg):
        nonlocal t
        segs.append(seg)
        t += seg.duration

    while True:
        if not queue:
            queue = list(rng.permutation(families))
        fam = queue.pop(0)
        left = budget_end - t
        if left < 1.0:
            break
        if fam == "accelerate":
            top = float(rng.uniform(40, 100))
            n_gears = int(rng.integers(1, 4))
            for _ in range(n_gears):
                dur = min(float(rng.uniform(1.5, 3.5)), budget_end - t)
                if dur < 0.5:
                    break
                push(Segment("accelerate", t, dur, gear, throttle=(float(rng.uniform(0, 30)), top)))
                gear = min(gear + 1, 6)
        elif fam == "sine_steer":
            freq = float(rng.uniform(0.2, 2.0))
            cycles = max(1, int(round(rng.uniform(2.0, 6.0) * freq)))
            dur = cycles / freq
            if dur > left:
                cycles = int(left * freq)
                if cycles < 1:
                    continue
                dur = cycles / freq
            thr = float(rng.uniform(15, 50))
            push(Segment("sine_steer", t, dur, gear, throttle=(thr, thr),
                         steer_amp=float(rng.uniform(10, 90)), steer_freq=freq))
        elif fam == "brake":
            dur = min(float(rng.uniform(1.0, 3.0)), left)
            push(Segment("brake", t, dur, gear, brake=(0.0, float(rng.uniform(20, 80)))))
            gear = max(gear - int(rng.integers(0, 3)), 1)
        else:
            dur = min(float(rng.uniform(2.0, 5.0)), left)
            thr = float(rng.uniform(10, 70))
            push(Segment("cruise", t, dur, gear, throttle=(thr, thr)))
            gear = int(np.clip(gear + rng.integers(-1, 2), 1, 6))
    # pad to the exact duration with the stop
    push(Segment("stop", t, duration - _STOP_IDLE_S - t, 1, brake=(80.0, 80.0)))
    push(Segment("idle", t, _STOP_IDLE_S))
    return ManeuverScript(tuple(segs), seed).validate()


def build_test_script(seed, duration=40.0):
    """Held-out maneuver set: sinusoidal steering, accelerations and braking ramps."""
    return build_training_script(seed, duration, families=("accelerate", "sine_steer", "brake"))


def simulate(params, script, sample_rate_hz=SAMPLE_RATE_HZ, duration=None,
             initial_state=None, substeps=1, label="synthetic"):
    """Integrate the single-track model over a script and emit telemetry.

    ``initial_state`` is ``(vx [m/s], vy [m/s], r [rad/s])``; when omitted the
    vehicle starts at rest and the emitted run is checked for standstill
    endpoints. ``substeps`` splits each sample interval into equal RK4 steps.
    """
    if not isinstance(params, SingleTrackParams):
        raise TypeError("params must be SingleTrackParams")
    script.validate()
    duration = script.duration if duration is None else float(duration)
    n_float = duration * sample_rate_hz
    n = int(round(n_float))
    if abs(n - n_float) > 1e-6 or n < 1:
        raise ValueError(f"duration {duration}s is not a whole number of samples at {sample_rate_hz} Hz")
    if duration > script.duration + 1e-9:
        raise ValueError(f"script covers {script.duration}s, shorter than duration {duration}s")
    controls = script.controls(np.arange(n) / sample_rate_hz)
    h = 1.0 / (sample_rate_hz * substeps)

    s = np.zeros(3) if initial_state is None else np.array(initial_state, dtype=np.float64)
    states = np.empty((n, N_STATES))
    for i in range(n):
        u_prev = controls[i - 1] if i else controls[0]
        _, (ax, ay) = derivatives(params, s, u_prev)
        states[i] = (ax, ay, math.degrees(s[2]), s[0] * KMH)
        if i == n - 1:
            break
        u = controls[i]
        for _ in range(substeps):
            s = _rk4(params, s, u, h)
            s[0] = max(s[0], 0.0)
    run = Run(np.concatenate([controls, states], axis=1), sample_rate_hz, label)
    if initial_state is None:
        validate_standstill(run)
    return run


def final_state(params, script, sample_rate_hz=SAMPLE_RATE_HZ, initial_state=None, substeps=1):
    """Integrated ``(vx, vy, r)`` at the end of the script (no telemetry)."""
    n = int(round(script.duration * sample_rate_hz))
    controls = script.controls(np.arange(n) / sample_rate_hz)
    h = 1.0 / (sample_rate_hz * substeps)
    s = np.zeros(3) if initial_state is None else np.array(initial_state, dtype=np.float64)
    for i in range(n):
        for _ in range(substeps):
            s = _rk4(params, s, controls[i], h)
            s[0] = max(s[0], 0.0)
    return s


def add_measurement_noise(run, noise_std, seed):
    """Additive white Gaussian noise on the four state channels.

    Samples where the clean vehicle is at rest stay noise-free so the run
    keeps its standstill endpoints; ``v_x`` is clamped at 0.
    """
    std = np.broadcast_to(np.asarray(noise_std, dtype=np.float64), (N_STATES,))
    if (std < 0).any() or not np.isfinite(std).all():
        raise ValueError(f"noise standard deviations must be finite and >= 0, got {std}")
    if not std.any():
        return run
    rng = np.random.default_rng(seed)
    states = run.states.copy()
    noise = rng.standard_normal(states.shape) * std
    noise[is_at_rest(states)] = 0.0
    states += noise
    states[:, 3] = np.maximum(states[:, 3], 0.0)
    rec = np.concatenate([run.controls, states], axis=1)
    return Run(rec, run.sample_rate_hz, run.label, run.filtered_hz)
