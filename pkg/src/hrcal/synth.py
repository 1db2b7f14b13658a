"""Synthetic cohort generator.

Each participant follows the three-state protocol: half an hour seated at
rest, a 60-90 minute lying-down block, then a treadmill set (rest, 2 km/h
walk, 5 km/h brisk walk, 8 km/h jog, 2 km/h cool-down, rest).  The
generator emits ground-truth heart rate, a surrogate ECG built from
QRS-like pulses, wrist accelerometer and cumulative step streams, and one
or more device HR streams corrupted by a lagged, biased, motion-scaled
error model.  Everything is deterministic given the master seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .activity import compute_counts, counts_to_levels, get_scheme, lookup_minute
from .errors import ConfigError
from .io import (ParticipantProfile, SampledSeries, SessionRecord,
                 TriaxialSeries, state_at)

TRUTH_RATE_HZ = 4.0
TRUTH_MIN, TRUTH_MAX = 40.0, 190.0

# Treadmill block layout as (speed km/h, fraction of the block).
IS_SEGMENTS = ((0.0, 0.25), (2.0, 0.125), (5.0, 0.125), (8.0, 0.125),
               (2.0, 0.125), (0.0, 0.25))

SPEED_STEP_RATE = {0.0: 0.0, 2.0: 70.0, 5.0: 105.0, 8.0: 150.0}
# arm-swing amplitude and frequency (one swing per stride pair)
SPEED_SWING_G = {0.0: 0.0, 2.0: 0.12, 5.0: 0.22, 8.0: 0.8}
SPEED_CADENCE_HZ = {0.0: 0.0, 2.0: 0.7, 5.0: 0.95, 8.0: 1.3}


@dataclass(frozen=True)
class DeviceErrorModel:
    """How a wrist device distorts the true heart rate."""

    name: str = "wrist"
    bias_bpm: tuple = (("RS", 1.0), ("LS", 0.5), ("IS", 3.0))
    noise_sd_bpm: float = 1.5
    ma_gain_bpm_per_kcpm: float = 2.0
    lag_s: float = 10.0
    cadence_s: float = 5.0

    def bias_for(self, state):
        return dict(self.bias_bpm).get(state, 0.0)


@dataclass(frozen=True)
class CohortConfig:
    n_participants: int = 6
    seed: int = 42
    rs_minutes: float = 30.0
    ls_minutes_range: tuple = (60.0, 90.0)
    is_minutes: float = 40.0
    fs_ecg: float = 250.0
    fs_acc: float = 32.0
    ecg_noise_mv: float = 0.01
    qrs_width_s: float = 0.04
    steps_cadence_s: float = 15.0
    devices: tuple = (DeviceErrorModel(),)

    def __post_init__(self):
        if self.n_participants < 1:
            raise ConfigError("need at least one participant")
        if min(self.rs_minutes, self.is_minutes, *self.ls_minutes_range) <= 0:
            raise ConfigError("state durations must be positive")
        if self.fs_ecg <= 40:
            raise ConfigError("fs_ecg must exceed 40 Hz for QRS-band filtering")
        if self.fs_acc < 20:
            raise ConfigError("fs_acc must be >= 20 Hz")
        for dev in self.devices:
            if dev.noise_sd_bpm < 0 or dev.ma_gain_bpm_per_kcpm < 0:
                raise ConfigError("device noise terms must be non-negative")


@dataclass
class GroundTruth:
    truth_hr: SampledSeries      # bpm at TRUTH_RATE_HZ
    fitness_offset: float
    intensity: SampledSeries     # treadmill speed (km/h) at 1 Hz

    def hr_at(self, t):
        return np.interp(t, self.truth_hr.t, self.truth_hr.v)


def _participant_ids(n):
    width = max(2, len(str(n)))
    return [f"P{i + 1:0{width}d}" for i in range(n)]


def _make_profile(pid, rng) -> ParticipantProfile:
    gender = "male" if rng.random() < 0.58 else "female"
    bmi = float(np.clip(rng.normal(23.0, 3.0), 17.0, 35.0))
    psqi = int(np.clip(rng.poisson(5.8), 0, 21))
    return ParticipantProfile(id=pid, gender=gender, bmi=bmi, psqi=psqi)


def _make_schedule(cfg: CohortConfig, rng):
    ls_minutes = float(rng.uniform(*cfg.ls_minutes_range))
    rs_end = cfg.rs_minutes * 60.0
    ls_end = rs_end + ls_minutes * 60.0
    is_end = ls_end + cfg.is_minutes * 60.0
    return [("RS", 0.0, rs_end), ("LS", rs_end, ls_end), ("IS", ls_end, is_end)]


def _speed_profile(schedule, cfg: CohortConfig):
    """Treadmill speed at 1 Hz over the whole session, with short ramps."""
    t_end = schedule[-1][2]
    t = np.arange(0.0, t_end + 1e-9, 1.0)
    speed = np.zeros_like(t)
    is_start, is_end = schedule[-1][1], schedule[-1][2]
    block = is_end - is_start
    cursor = is_start
    segments = []
    for spd, frac in IS_SEGMENTS:
        seg_len = block * frac
        segments.append((spd, cursor, cursor + seg_len))
        cursor += seg_len
    ramp = 45.0
    for spd, s0, s1 in segments:
        mask = (t >= s0) & (t < s1)
        speed[mask] = spd
    # linear ramps into each segment ("speed slightly increased")
    for idx in range(1, len(segments)):
        spd_prev = segments[idx - 1][0]
        spd, s0, _ = segments[idx]
        r = min(ramp, (segments[idx][2] - s0) / 3.0)
        mask = (t >= s0) & (t < s0 + r)
        speed[mask] = spd_prev + (spd - spd_prev) * (t[mask] - s0) / r
    return SampledSeries(t, speed, unit="kmh", source="derived")


def _truth_hr(schedule, speed: SampledSeries, profile, rng, fitness):
    """First-order response toward state- and speed-dependent targets."""
    male = profile.gender == "male"
    rest_target = (70.0 + 0.5 * (profile.psqi - 5.0) + 0.4 * (profile.bmi - 23.0)
                   - 2.0 * male + rng.normal(0.0, 2.0))
    ls_target = rest_target - 8.0 + rng.normal(0.0, 1.0)
    peak_target = float(np.clip(168.0 - 1.2 * (profile.bmi - 23.0)
                                + 8.0 * fitness, 150.0, 182.0))

    t_end = schedule[-1][2]
    dt = 1.0 / TRUTH_RATE_HZ
    n = int(np.floor(t_end * TRUTH_RATE_HZ)) + 1
    t = np.arange(n) * dt

    # slow seeded wander so the truth is not piecewise-exponential
    wander = np.zeros(n)
    w = 0.0
    sigma_w = 1.3
    for i in range(1, n):
        w += (-w / 120.0) * dt + sigma_w * math.sqrt(dt / 120.0) * rng.normal()
        wander[i] = w

    speeds = np.interp(t, speed.t, speed.v)
    targets = np.empty(n)
    for i, ti in enumerate(t):
        state = state_at(schedule, ti)
        if state == "RS":
            base = rest_target
        elif state == "LS":
            base = ls_target
        else:
            base = rest_target + 3.0 + (peak_target - rest_target - 3.0) * (
                (speeds[i] / 8.0) ** 1.2)
        targets[i] = base + wander[i]

    tau = 35.0
    hr = np.empty(n)
    hr[0] = targets[0]
    for i in range(1, n):
        hr[i] = hr[i - 1] + dt * (targets[i] - hr[i - 1]) / tau
    hr = np.clip(hr, TRUTH_MIN, TRUTH_MAX)
    return SampledSeries(t, hr, unit="bpm", source="derived")


def _render_ecg(truth: SampledSeries, cfg: CohortConfig, rng) -> SampledSeries:
    """QRS-like pulse train: negative-curvature Gaussian-derivative pulses
    whose spectral peak sits in the 15-20 Hz detection band."""
    fs = cfg.fs_ecg
    t_end = truth.t[-1]
    n = int(np.floor(t_end * fs)) + 1
    t = np.arange(n) / fs
    signal = np.zeros(n)

    sigma = cfg.qrs_width_s * 0.3
    half = int(math.ceil(4 * sigma * fs))
    offsets = np.arange(-half, half + 1)
    tau = offsets / fs
    pulse = (1.0 - (tau / sigma) ** 2) * np.exp(-0.5 * (tau / sigma) ** 2)

    beat = truth.t[0]
    while beat <= t_end:
        center = int(round(beat * fs))
        lo = max(0, center - half)
        hi = min(n, center + half + 1)
        signal[lo:hi] += pulse[lo - (center - half): hi - (center - half)]
        hr = float(np.interp(beat, truth.t, truth.v))
        beat += 60.0 / hr

    if cfg.ecg_noise_mv > 0:
        signal = signal + rng.normal(0.0, cfg.ecg_noise_mv, size=n)
    # baseline respiration-like wander, far below the QRS band
    signal = signal + 0.05 * np.sin(2.0 * np.pi * 0.25 * t + rng.uniform(0, 2 * np.pi))
    return SampledSeries(t, signal, unit="mV", source="ecg")


def _motion_events(schedule, state, rate_per_s, amp_range, rng):
    events = []
    for st, t0, t1 in schedule:
        if st != state:
            continue
        count = rng.poisson((t1 - t0) * rate_per_s)
        for _ in range(count):
            start = rng.uniform(t0, t1)
            events.append((start, start + rng.uniform(5.0, 20.0),
                           rng.uniform(*amp_range), rng.uniform(0.4, 1.5)))
    return events


def _render_accel(schedule, speed: SampledSeries, cfg: CohortConfig, rng):
    fs = cfg.fs_acc
    t_end = schedule[-1][2]
    n = int(np.floor(t_end * fs)) + 1
    t = np.arange(n) / fs

    speeds = np.interp(t, speed.t, speed.v)
    swing = np.interp(speeds, sorted(SPEED_SWING_G),
                      [SPEED_SWING_G[k] for k in sorted(SPEED_SWING_G)])
    cadence = np.interp(speeds, sorted(SPEED_CADENCE_HZ),
                        [SPEED_CADENCE_HZ[k] for k in sorted(SPEED_CADENCE_HZ)])

    for start, end, amp, freq in (_motion_events(schedule, "RS", 1 / 200.0,
                                                 (0.03, 0.08), rng)
                                  + _motion_events(schedule, "LS", 1 / 500.0,
                                                   (0.02, 0.05), rng)):
        mask = (t >= start) & (t < end)
        swing = swing + np.where(mask, amp, 0.0)
        cadence = cadence + np.where(mask, freq, 0.0)

    phase = np.cumsum(cadence) / fs * 2.0 * np.pi
    p1, p2, p3 = rng.uniform(0, 2 * np.pi, size=3)
    noise = rng.normal(0.0, 0.004, size=(3, n))
    y = 1.0 + swing * np.sin(phase + p1) + 0.3 * swing * np.sin(2 * phase + p2) \
        + noise[0]
    x = 0.35 * swing * np.sin(phase + p3) + noise[1]
    z = 0.25 * swing * np.cos(phase + p1) + noise[2]
    return TriaxialSeries(t, x, y, z)


def _render_steps(speed: SampledSeries, cfg: CohortConfig, rng) -> SampledSeries:
    jitter = 1.0 + rng.normal(0.0, 0.03)
    t = np.arange(0.0, speed.t[-1] + 1e-9, cfg.steps_cadence_s)
    rate = np.interp(t, speed.t, speed.v)
    spm = np.interp(rate, sorted(SPEED_STEP_RATE),
                    [SPEED_STEP_RATE[k] for k in sorted(SPEED_STEP_RATE)]) * jitter
    increments = spm * cfg.steps_cadence_s / 60.0
    cumulative = np.floor(np.cumsum(increments))
    cumulative[0] = 0.0
    return SampledSeries(t, cumulative, unit="steps/min", source="device")


def _render_device(truth: GroundTruth, schedule, cpm_vm: SampledSeries,
                   dev: DeviceErrorModel, rng) -> SampledSeries:
    t0 = truth.truth_hr.t[0] + max(dev.lag_s, 0.0)
    t_end = truth.truth_hr.t[-1]
    times = np.arange(t0 + dev.cadence_s, t_end + 1e-9, dev.cadence_s)
    values = np.empty(times.size)
    for i, ti in enumerate(times):
        state = state_at(schedule, ti)
        cpm = lookup_minute(cpm_vm, ti) or 0.0
        sd = dev.noise_sd_bpm + dev.ma_gain_bpm_per_kcpm * cpm / 1000.0
        base = truth.hr_at(ti - dev.lag_s) + dev.bias_for(state)
        noise = rng.normal(0.0, sd) if sd > 0 else 0.0
        values[i] = base + noise
    values = np.clip(values, 30.0, 230.0)
    return SampledSeries(times, values, unit="bpm", source="device_raw")


def generate_participant(cfg: CohortConfig, index: int):
    """One (SessionRecord, GroundTruth) pair, seeded by participant index."""
    streams = {name: np.random.default_rng([cfg.seed, index, k])
               for k, name in enumerate(
                   ["profile", "hr", "ecg", "accel", "steps"])}
    pid = _participant_ids(cfg.n_participants)[index]
    profile = _make_profile(pid, streams["profile"])
    schedule = _make_schedule(cfg, streams["profile"])
    fitness = float(streams["profile"].normal(0.0, 1.0))

    speed = _speed_profile(schedule, cfg)
    truth_hr = _truth_hr(schedule, speed, profile, streams["hr"], fitness)
    truth = GroundTruth(truth_hr, fitness, speed)

    ecg = _render_ecg(truth_hr, cfg, streams["ecg"])
    accel = _render_accel(schedule, speed, cfg, streams["accel"])
    steps = _render_steps(speed, cfg, streams["steps"])

    cpm_vm = compute_counts(accel, "vm")
    devices = {}
    for dev_idx, dev in enumerate(cfg.devices):
        dev_rng = np.random.default_rng([cfg.seed, index, 100 + dev_idx])
        devices[dev.name] = _render_device(truth, schedule, cpm_vm, dev, dev_rng)
    primary_name = cfg.devices[0].name
    device_hr = devices.pop(primary_name)

    # Device-style activity levels: per-minute, stamped at the minute end.
    levels = counts_to_levels(cpm_vm, get_scheme("crouter_vm"))
    device_pal = SampledSeries(levels.t + 60.0, levels.v, unit="level",
                               source="device")

    session = SessionRecord(profile=profile, ecg=ecg, device_hr=device_hr,
                            accel=accel, steps=steps, schedule=schedule,
                            fs_ecg=cfg.fs_ecg, fs_acc=cfg.fs_acc,
                            extra_devices=devices, device_pal=device_pal)
    return session.validate(), truth


def generate_cohort(cfg: CohortConfig):
    """All participants, deterministically, as (SessionRecord, GroundTruth)."""
    return [generate_participant(cfg, i) for i in range(cfg.n_participants)]


def inject_known_miscalibration(session: SessionRecord, truth: GroundTruth,
                                profile_fn) -> SessionRecord:
    """Overlay a known miscalibration profile on the device stream.

    profile_fn(true_hr, cpm, state) -> bpm describes where a miscalibrated
    device *would* sit relative to truth; its deviation from truth is added
    to the recorded stream, so an identity profile leaves the stream
    untouched and ground truth is never modified.
    """
    cpm_vm = compute_counts(session.accel, "vm")
    t = session.device_hr.t
    new_v = session.device_hr.v.copy()
    for i, ti in enumerate(t):
        state = state_at(session.schedule, ti)
        cpm = lookup_minute(cpm_vm, ti) or 0.0
        true_hr = float(truth.hr_at(ti))
        new_v[i] += profile_fn(true_hr, cpm, state) - true_hr
    patched = SampledSeries(t.copy(), new_v, unit="bpm", source="device_raw")
    return replace(session, device_hr=patched)
