"""ECG-to-heart-rate extraction on the 15-second analysis grid.

The chain is: zero-phase bandpass of the raw ECG to isolate the QRS band,
adaptive-threshold R-peak picking, beat-interval to bpm conversion,
uniform resampling, zero-phase low-pass smoothing, optional lag shifting,
then nearest-neighbour snapping onto the analysis grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import butter, filtfilt

from .errors import ConfigError, InsufficientDataError, ValidationError
from .io import SampledSeries

HR_MIN_BPM = 20.0
HR_MAX_BPM = 250.0


@dataclass
class FilterSpec:
    """Butterworth filter description.

    Bandpass filters take corner frequencies in Hz; low-pass filters take a
    cutoff as a fraction of Nyquist in (0, 1).
    """

    kind: str = "bandpass"  # "bandpass" | "lowpass"
    low_hz: float = 15.0
    high_hz: float = 20.0
    normalized_cutoff: float = 0.05
    order: int = 4

    def validate(self, fs=None):
        if self.order < 1:
            raise ConfigError(f"filter order must be >= 1, got {self.order}")
        if self.kind == "bandpass":
            if not (0 < self.low_hz < self.high_hz):
                raise ConfigError("bandpass needs 0 < low_hz < high_hz")
            if fs is not None and self.high_hz >= fs / 2:
                raise ConfigError(
                    f"bandpass high edge {self.high_hz} Hz needs fs > {2 * self.high_hz} Hz, "
                    f"got fs={fs:.3f}")
        elif self.kind == "lowpass":
            if not (0 < self.normalized_cutoff < 1):
                raise ConfigError("normalized_cutoff must lie in (0, 1)")
        else:
            raise ConfigError(f"unknown filter kind {self.kind!r}")
        return self


def sampling_rate(series: SampledSeries) -> float:
    """Sampling rate of a uniform series, inferred from timestamps."""
    if len(series) < 2:
        raise InsufficientDataError("need >= 2 samples to infer a rate")
    dt = np.diff(series.t)
    step = float(np.median(dt))
    if step <= 0:
        raise ValidationError("non-increasing timestamps")
    if np.max(np.abs(dt - step)) > 0.01 * step:
        raise ValidationError("series is not uniformly sampled")
    return 1.0 / step


def bandpass_ecg(ecg: SampledSeries, spec: FilterSpec) -> SampledSeries:
    """Zero-phase Butterworth bandpass; same length and timestamps."""
    fs = sampling_rate(ecg)
    spec.validate(fs=fs)
    if spec.kind != "bandpass":
        raise ConfigError("bandpass_ecg needs a bandpass FilterSpec")
    nyq = fs / 2.0
    b, a = butter(spec.order, [spec.low_hz / nyq, spec.high_hz / nyq], btype="band")
    filtered = filtfilt(b, a, ecg.v)
    return SampledSeries(ecg.t.copy(), filtered, unit=ecg.unit, source="derived")


def detect_r_peaks(filtered: SampledSeries, *, window_s: float = 2.0,
                   threshold_sigma: float = 2.5,
                   refractory_s: float = 0.25) -> np.ndarray:
    """R-peak times from a bandpassed ECG.

    Candidates are local maxima of the squared signal exceeding a rolling
    mean + threshold_sigma * rolling std (window_s wide).  Within the
    refractory period the larger candidate wins, which keeps the true QRS
    when a sidelobe sneaks over the threshold first.
    """
    n = len(filtered)
    if n < 3:
        return np.empty(0, dtype=float)
    fs = sampling_rate(filtered)
    sq = filtered.v ** 2
    win = max(3, int(round(window_s * fs)))
    mean = uniform_filter1d(sq, size=win, mode="nearest")
    mean_sq = uniform_filter1d(sq * sq, size=win, mode="nearest")
    std = np.sqrt(np.maximum(mean_sq - mean ** 2, 0.0))
    threshold = mean + threshold_sigma * std

    interior = np.arange(1, n - 1)
    is_max = (sq[interior] > sq[interior - 1]) & (sq[interior] >= sq[interior + 1])
    above = sq[interior] > threshold[interior]
    candidates = interior[is_max & above]
    if candidates.size == 0:
        return np.empty(0, dtype=float)

    kept = [candidates[0]]
    for idx in candidates[1:]:
        if filtered.t[idx] - filtered.t[kept[-1]] >= refractory_s:
            kept.append(idx)
        elif sq[idx] > sq[kept[-1]]:
            kept[-1] = idx
    return filtered.t[np.asarray(kept, dtype=int)]


def rr_to_hr(peaks) -> SampledSeries:
    """Beat-to-beat heart rate: sample (t_{i+1}, 60 / (t_{i+1} - t_i))."""
    peaks = np.asarray(peaks, dtype=float)
    if peaks.size < 2:
        raise InsufficientDataError("need >= 2 peaks to form an interval")
    rr = np.diff(peaks)
    if np.any(rr <= 0):
        raise ValidationError("peak times not strictly increasing")
    return SampledSeries(peaks[1:], 60.0 / rr, unit="bpm", source="ecg_truth")


def resample_uniform(series: SampledSeries, rate_hz: float = 4.0) -> SampledSeries:
    """Linear interpolation onto a uniform grid spanning the series."""
    if len(series) < 2:
        raise InsufficientDataError("need >= 2 samples to resample")
    if rate_hz <= 0:
        raise ConfigError("rate_hz must be positive")
    step = 1.0 / rate_hz
    k0 = int(np.ceil(series.t[0] / step - 1e-9))
    k1 = int(np.floor(series.t[-1] / step + 1e-9))
    if k1 < k0:
        raise InsufficientDataError("series span shorter than one sample step")
    grid = np.arange(k0, k1 + 1) * step
    values = np.interp(grid, series.t, series.v)
    return SampledSeries(grid, values, unit=series.unit, source=series.source)


def lowpass_hr(hr: SampledSeries, normalized_cutoff: float = 0.05,
               order: int = 2) -> SampledSeries:
    """Zero-phase low-pass on a uniformly resampled HR series."""
    if not (0 < normalized_cutoff < 1):
        raise ConfigError("normalized_cutoff must lie in (0, 1)")
    sampling_rate(hr)  # asserts uniformity
    if len(hr) <= 3 * (order + 1):
        return SampledSeries(hr.t.copy(), hr.v.copy(), unit=hr.unit, source=hr.source)
    b, a = butter(order, normalized_cutoff, btype="low")
    smoothed = filtfilt(b, a, hr.v)
    return SampledSeries(hr.t.copy(), smoothed, unit=hr.unit, source=hr.source)


def shift_series(hr: SampledSeries, delay_s: float) -> SampledSeries:
    """Delay every timestamp by delay_s; values untouched."""
    return SampledSeries(hr.t + delay_s, hr.v.copy(), unit=hr.unit, source=hr.source)


def shift_by_state(hr: SampledSeries, schedule, delays: dict) -> SampledSeries:
    """Delay each sample by its activity state's configured lag.

    delays maps state name to seconds; states missing from the map get 0.
    Samples whose shifted timestamp would run backwards over a state
    boundary are dropped to keep the series strictly increasing.
    """
    from .io import state_at

    shifted = hr.t.copy()
    for i, t in enumerate(hr.t):
        state = state_at(schedule, t)
        shifted[i] = t + delays.get(state, 0.0)
    order = np.argsort(shifted, kind="stable")
    ts, vs = shifted[order], hr.v[order]
    keep = np.ones(ts.size, dtype=bool)
    last = -np.inf
    for i in range(ts.size):
        if ts[i] <= last:
            keep[i] = False
        else:
            last = ts[i]
    return SampledSeries(ts[keep], vs[keep], unit=hr.unit, source=hr.source)


def align_to_grid(series: SampledSeries, grid_step_s: float = 15.0,
                  tolerance_s: float = 7.5) -> SampledSeries:
    """Snap a series onto the analysis grid.

    Each grid point takes the nearest sample within tolerance; grid points
    with nothing in range are absent, never interpolated.  When two samples
    are equidistant the earlier one wins.
    """
    if len(series) == 0:
        return SampledSeries(np.empty(0), np.empty(0), unit=series.unit,
                             source=series.source)
    k0 = max(0, int(np.ceil((series.t[0] - tolerance_s) / grid_step_s - 1e-9)))
    k1 = int(np.floor((series.t[-1] + tolerance_s) / grid_step_s + 1e-9))
    out_t, out_v = [], []
    for k in range(k0, k1 + 1):
        g = k * grid_step_s
        j = int(np.searchsorted(series.t, g))
        best, best_d = None, None
        for cand in (j - 1, j):
            if 0 <= cand < len(series):
                d = abs(series.t[cand] - g)
                if best is None or d < best_d - 1e-12:
                    best, best_d = cand, d
        if best is not None and best_d <= tolerance_s + 1e-12:
            out_t.append(g)
            out_v.append(series.v[best])
    return SampledSeries(np.asarray(out_t), np.asarray(out_v),
                         unit=series.unit, source=series.source)


def validate_hr(series: SampledSeries, name="hr") -> SampledSeries:
    """Reject heart-rate values outside the physiological band."""
    series.validate(name)
    if len(series) and (np.any(series.v <= HR_MIN_BPM) or np.any(series.v >= HR_MAX_BPM)):
        bad = series.v[(series.v <= HR_MIN_BPM) | (series.v >= HR_MAX_BPM)][0]
        raise ValidationError(f"{name}: value {bad:.2f} bpm outside "
                              f"({HR_MIN_BPM:g}, {HR_MAX_BPM:g})")
    return series


def ecg_to_hr(ecg: SampledSeries, *, band: FilterSpec | None = None,
              resample_hz: float = 4.0, lowpass_cutoff: float = 0.05,
              lowpass_order: int = 2) -> SampledSeries:
    """Full ECG-to-smoothed-HR chain (no lag shift, no grid alignment)."""
    spec = band or FilterSpec()
    filtered = bandpass_ecg(ecg, spec)
    peaks = detect_r_peaks(filtered)
    hr = rr_to_hr(peaks)
    hr = resample_uniform(hr, resample_hz)
    return lowpass_hr(hr, lowpass_cutoff, lowpass_order)
