"""Activity counts, intensity-level cut-points, and step rates.

Counts follow the usual actigraphy recipe: band-pass the dynamic component
of each axis, rectify with a small deadband, integrate over one-second
epochs, scale to counts, and total per minute.  Intensity levels come from
the published wrist/hip cut-point tables of Crouter, Freedson, and Troiano.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, filtfilt

from .errors import ConfigError, DomainError, InsufficientDataError, ValidationError
from .io import SampledSeries, TriaxialSeries

PAL_LEVELS = ("SED", "LPA", "MPA", "VPA")

# Default scale from integrated |acceleration| (g*s) to counts.  Only the
# ordering against cut-points matters downstream, so this is config-exposed.
COUNTS_PER_G_SECOND = 128.0
COUNT_BAND_HZ = (0.25, 2.5)
COUNT_DEADBAND_G = 0.01


@dataclass(frozen=True)
class PalScheme:
    """A named cut-point scheme: three thresholds partitioning [0, inf).

    cpm below cutpoints[0] is SED, below cutpoints[1] LPA, below
    cutpoints[2] MPA, else VPA.  axis_mode selects the vertical axis ("va",
    wrist y-axis) or the vector magnitude ("vm") when computing counts.
    """

    name: str
    axis_mode: str  # "va" | "vm"
    cutpoints: tuple

    def __post_init__(self):
        if self.axis_mode not in ("va", "vm"):
            raise ConfigError(f"bad axis_mode {self.axis_mode!r}")
        t1, t2, t3 = self.cutpoints
        if not (0 < t1 < t2 < t3):
            raise ConfigError(f"cutpoints must increase, got {self.cutpoints}")


# Published integer ranges: SED <=35, LPA 36-360, MPA 361-1129, VPA >=1130
# (Crouter VA), and the counterparts for the other three schemes.  The
# Troiano vigorous class starts at 5999 so that 5998 stays moderate.
SCHEMES = {
    "crouter_va": PalScheme("crouter_va", "va", (36.0, 361.0, 1130.0)),
    "crouter_vm": PalScheme("crouter_vm", "vm", (101.0, 610.0, 1810.0)),
    "freedson_va": PalScheme("freedson_va", "va", (100.0, 760.0, 5725.0)),
    "troiano_va": PalScheme("troiano_va", "va", (101.0, 2020.0, 5999.0)),
}


def get_scheme(name: str) -> PalScheme:
    try:
        return SCHEMES[name]
    except KeyError:
        raise ConfigError(f"unknown cut-point scheme {name!r}; "
                          f"choose from {sorted(SCHEMES)}") from None


def classify_pal(cpm: float, scheme: PalScheme) -> int:
    """Ordinal intensity level (0=SED .. 3=VPA) for a counts-per-minute value."""
    if not np.isfinite(cpm) or cpm < 0:
        raise DomainError(f"cpm must be finite non-negative, got {cpm}")
    level = 0
    for threshold in scheme.cutpoints:
        if cpm >= threshold:
            level += 1
    return level


def pal_name(level: int) -> str:
    return PAL_LEVELS[level]


def compute_counts(accel: TriaxialSeries, axis_mode: str = "va", *,
                   band_hz=COUNT_BAND_HZ, filter_order: int = 4,
                   counts_per_g_s: float = COUNTS_PER_G_SECOND,
                   deadband_g: float = COUNT_DEADBAND_G,
                   epoch_s: float = 1.0) -> SampledSeries:
    """Counts per minute from raw triaxial acceleration.

    Emits one non-negative cpm value per complete minute, timestamped at
    the minute start; a partial trailing minute is dropped.
    """
    if axis_mode not in ("va", "vm"):
        raise ConfigError(f"bad axis_mode {axis_mode!r}")
    n = len(accel)
    if n < 2:
        raise InsufficientDataError("accelerometer stream too short")
    dt = np.diff(accel.t)
    step = float(np.median(dt))
    if step <= 0 or np.max(np.abs(dt - step)) > 0.01 * step:
        raise ValidationError("accelerometer not uniformly sampled")
    fs = 1.0 / step
    if fs < 20.0:
        raise ConfigError(f"accelerometer rate {fs:.1f} Hz below 20 Hz minimum")

    nyq = fs / 2.0
    b, a = butter(filter_order, [band_hz[0] / nyq, band_hz[1] / nyq], btype="band")
    if axis_mode == "va":
        dynamic = filtfilt(b, a, accel.y)
        rect = np.abs(dynamic)
    else:
        bx = filtfilt(b, a, accel.x)
        by = filtfilt(b, a, accel.y)
        bz = filtfilt(b, a, accel.z)
        rect = np.sqrt(bx * bx + by * by + bz * bz)
    rect = np.maximum(rect - deadband_g, 0.0)

    per_epoch = int(round(epoch_s * fs))
    epochs_per_min = int(round(60.0 / epoch_s))
    n_epochs = n // per_epoch
    n_minutes = n_epochs // epochs_per_min
    if n_minutes < 1:
        raise InsufficientDataError("need at least one full minute of data")

    used = rect[: n_minutes * epochs_per_min * per_epoch]
    epoch_integrals = used.reshape(-1, per_epoch).sum(axis=1) * step
    epoch_counts = counts_per_g_s * epoch_integrals
    cpm = epoch_counts.reshape(n_minutes, epochs_per_min).sum(axis=1)
    minute_starts = accel.t[0] + 60.0 * np.arange(n_minutes)
    return SampledSeries(minute_starts, cpm, unit="cpm", source="derived")


def counts_to_levels(cpm_series: SampledSeries, scheme: PalScheme) -> SampledSeries:
    levels = np.array([classify_pal(v, scheme) for v in cpm_series.v], dtype=float)
    return SampledSeries(cpm_series.t.copy(), levels, unit="level", source="derived")


def steps_per_minute(cumulative: SampledSeries) -> SampledSeries:
    """Per-minute step rate from a cumulative step counter.

    Consecutive differences are normalised by the actual sampling interval,
    which reduces to the plain first difference at one-minute cadence.
    Each rate is stamped at the later sample's time.
    """
    n = len(cumulative)
    if n < 2:
        return SampledSeries(np.empty(0), np.empty(0), unit="steps/min",
                             source="derived")
    diffs = np.diff(cumulative.v)
    if np.any(diffs < 0):
        raise ValidationError("cumulative step count decreases")
    dt = np.diff(cumulative.t)
    if np.any(dt <= 0):
        raise ValidationError("step timestamps not strictly increasing")
    rate = diffs / (dt / 60.0)
    return SampledSeries(cumulative.t[1:].copy(), rate, unit="steps/min",
                         source="derived")


def lookup_minute(series: SampledSeries, t: float):
    """Value of a per-minute series at the minute containing t, else None."""
    if len(series) == 0:
        return None
    idx = int(np.floor((t - series.t[0]) / 60.0 + 1e-9))
    if 0 <= idx < len(series):
        return float(series.v[idx])
    return None


def lookup_interval(series: SampledSeries, t: float, max_age_s: float = 60.0):
    """Most recent sample at or before t, if it is fresh enough, else None.

    Used for rate-style streams (step rate, device activity level) whose
    sample stamped at t_i summarises the window ending at t_i.
    """
    if len(series) == 0:
        return None
    idx = int(np.searchsorted(series.t, t + 1e-9)) - 1
    if idx < 0:
        # Allow the first sample to cover the run-in before its stamp.
        if series.t[0] - t <= max_age_s + 1e-9:
            return float(series.v[0])
        return None
    if t - series.t[idx] <= max_age_s + 1e-9:
        return float(series.v[idx])
    return None
