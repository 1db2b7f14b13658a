"""Session data model and CSV schemas.

A session lives in one directory:

    meta.csv        fs_ecg,fs_acc,participant_id,gender,bmi,psqi
    ecg.csv         t,mv
    device_hr.csv   t,bpm
    accel.csv       t,x,y,z            (units g)
    steps.csv       t,cumulative_steps (may be header-only)
    schedule.csv    state,t_start,t_end  with state in {RS,LS,IS}

Optional extras written by the synthetic generator and used by the
device-validation command:

    device_hr_<name>.csv   additional HR streams, same schema as device_hr.csv
    device_pal.csv         t,level   (device-reported activity level, 0-3)
    truth_hr.csv           t,bpm     (generator ground truth; ignored on load)

All timestamps are seconds from session start.  Numbers are written as
decimal text with up to 9 significant digits, which round-trips exactly
through load/write.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError, IoError, ParseError, ValidationError

STATES = ("RS", "LS", "IS")
ALL_STATES = "ALL"


def fmt(value) -> str:
    """Format a number as decimal text with up to 9 significant digits."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".9g")


@dataclass
class SampledSeries:
    """A timestamped scalar stream.

    ``source`` doubles as provenance for heart-rate series
    (ecg_truth / device_raw / calibrated).
    """

    t: np.ndarray
    v: np.ndarray
    unit: str = ""
    source: str = "derived"

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.v = np.asarray(self.v, dtype=float)

    def __len__(self):
        return self.t.size

    def validate(self, name="series", require_positive=False):
        if self.t.size != self.v.size:
            raise ValidationError(f"{name}: timestamp/value length mismatch")
        if self.t.size and not np.all(np.isfinite(self.t)):
            raise ValidationError(f"{name}: non-finite timestamp")
        if self.v.size and not np.all(np.isfinite(self.v)):
            raise ValidationError(f"{name}: non-finite value")
        if self.t.size > 1 and not np.all(np.diff(self.t) > 0):
            raise ValidationError(f"{name}: timestamps not strictly increasing")
        if require_positive and self.v.size and np.any(self.v < 0):
            raise ValidationError(f"{name}: negative value")
        return self


@dataclass
class TriaxialSeries:
    """Three-axis accelerometer stream in g."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    source: str = "device"

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.z = np.asarray(self.z, dtype=float)

    def __len__(self):
        return self.t.size

    def validate(self, name="accel"):
        n = self.t.size
        for label, arr in (("x", self.x), ("y", self.y), ("z", self.z)):
            if arr.size != n:
                raise ValidationError(f"{name}: axis {label} length mismatch")
            if arr.size and not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name}: non-finite value on axis {label}")
        if n and not np.all(np.isfinite(self.t)):
            raise ValidationError(f"{name}: non-finite timestamp")
        if n > 1 and not np.all(np.diff(self.t) > 0):
            raise ValidationError(f"{name}: timestamps not strictly increasing")
        return self


@dataclass
class ParticipantProfile:
    id: str
    gender: str  # "male" | "female"
    bmi: float
    psqi: int

    def validate(self):
        if self.gender not in ("male", "female"):
            raise ValidationError(f"profile {self.id}: bad gender {self.gender!r}")
        if not (math.isfinite(self.bmi) and self.bmi > 0):
            raise ValidationError(f"profile {self.id}: bmi must be finite positive")
        if not (0 <= int(self.psqi) <= 21):
            raise ValidationError(f"profile {self.id}: psqi outside [0, 21]")
        return self


@dataclass
class SessionRecord:
    """One participant's full recording."""

    profile: ParticipantProfile
    ecg: SampledSeries
    device_hr: SampledSeries
    accel: TriaxialSeries
    steps: SampledSeries
    schedule: list  # [(state, t_start, t_end), ...]
    fs_ecg: float = 0.0
    fs_acc: float = 0.0
    extra_devices: dict = field(default_factory=dict)
    device_pal: SampledSeries | None = None

    def validate(self):
        self.profile.validate()
        validate_schedule(self.schedule)
        self.ecg.validate("ecg")
        self.device_hr.validate("device_hr", require_positive=True)
        self.accel.validate("accel")
        self.steps.validate("steps", require_positive=True)
        for name, series in self.extra_devices.items():
            series.validate(f"device_hr_{name}", require_positive=True)
        if self.device_pal is not None:
            self.device_pal.validate("device_pal", require_positive=True)
        span = (self.schedule[0][1], self.schedule[-1][2])
        for name, series in (("ecg", self.ecg), ("device_hr", self.device_hr),
                             ("steps", self.steps)):
            if len(series) and (series.t[0] < span[0] - 1e-9 or series.t[-1] > span[1] + 1e-9):
                raise ValidationError(f"{name}: samples outside schedule span {span}")
        if len(self.accel) and (self.accel.t[0] < span[0] - 1e-9 or self.accel.t[-1] > span[1] + 1e-9):
            raise ValidationError(f"accel: samples outside schedule span {span}")
        return self


def validate_schedule(schedule):
    if not schedule:
        raise ValidationError("schedule: empty")
    prev_end = None
    for state, t0, t1 in schedule:
        if state not in STATES:
            raise ValidationError(f"schedule: unknown state {state!r}")
        if not (t1 > t0):
            raise ValidationError(f"schedule: empty interval {state} [{t0}, {t1}]")
        if prev_end is not None and t0 < prev_end - 1e-9:
            raise ValidationError(f"schedule: overlap at {state} start {t0}")
        prev_end = t1
    return schedule


def state_at(schedule, t):
    """State whose [t_start, t_end) interval contains t, else None.

    The final interval is closed on the right so the last grid point of a
    session still maps to a state.
    """
    for i, (state, t0, t1) in enumerate(schedule):
        if t0 <= t < t1:
            return state
        if i == len(schedule) - 1 and t == t1:
            return state
    return None


def schedule_span(schedule):
    return schedule[0][1], schedule[-1][2]


# ---------------------------------------------------------------------------
# CSV primitives


def _read_rows(path, expected_header):
    path = Path(path)
    if not path.exists():
        raise ParseError(path, 0, "file not found")
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "missing header") from None
        if [h.strip() for h in header] != list(expected_header):
            raise ParseError(path, 1,
                             f"expected header {','.join(expected_header)}, "
                             f"got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(expected_header):
                raise ParseError(path, lineno,
                                 f"expected {len(expected_header)} fields, got {len(row)}")
            rows.append((lineno, row))
    return rows


def _parse_float(path, lineno, text, column):
    try:
        return float(text)
    except ValueError:
        raise ParseError(path, lineno, f"bad number {text!r} in column {column}") from None


def _load_columns(path, header):
    rows = _read_rows(path, header)
    cols = [[] for _ in header]
    for lineno, row in rows:
        for i, name in enumerate(header):
            cols[i].append(_parse_float(path, lineno, row[i], name))
    return [np.asarray(c, dtype=float) for c in cols]


def _write_csv(path, header, columns):
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            n = len(columns[0]) if columns else 0
            for i in range(n):
                fh.write(",".join(fmt(col[i]) for col in columns) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Session load / write


def load_session(path) -> SessionRecord:
    """Load and validate one session directory."""
    root = Path(path)
    if not root.is_dir():
        raise ParseError(root, 0, "not a directory")

    meta_rows = _read_rows(root / "meta.csv",
                           ("fs_ecg", "fs_acc", "participant_id", "gender", "bmi", "psqi"))
    if len(meta_rows) != 1:
        raise ParseError(root / "meta.csv", 2, "expected exactly one data row")
    lineno, row = meta_rows[0]
    fs_ecg = _parse_float(root / "meta.csv", lineno, row[0], "fs_ecg")
    fs_acc = _parse_float(root / "meta.csv", lineno, row[1], "fs_acc")
    profile = ParticipantProfile(
        id=row[2].strip(),
        gender=row[3].strip(),
        bmi=_parse_float(root / "meta.csv", lineno, row[4], "bmi"),
        psqi=int(_parse_float(root / "meta.csv", lineno, row[5], "psqi")),
    )

    t, mv = _load_columns(root / "ecg.csv", ("t", "mv"))
    ecg = SampledSeries(t, mv, unit="mV", source="ecg")

    t, bpm = _load_columns(root / "device_hr.csv", ("t", "bpm"))
    device_hr = SampledSeries(t, bpm, unit="bpm", source="device_raw")

    t, x, y, z = _load_columns(root / "accel.csv", ("t", "x", "y", "z"))
    accel = TriaxialSeries(t, x, y, z)

    t, steps = _load_columns(root / "steps.csv", ("t", "cumulative_steps"))
    steps_series = SampledSeries(t, steps, unit="steps/min", source="device")

    sched_rows = _read_rows(root / "schedule.csv", ("state", "t_start", "t_end"))
    schedule = []
    for lineno, row in sched_rows:
        schedule.append((row[0].strip(),
                         _parse_float(root / "schedule.csv", lineno, row[1], "t_start"),
                         _parse_float(root / "schedule.csv", lineno, row[2], "t_end")))

    extra = {}
    for extra_path in sorted(root.glob("device_hr_*.csv")):
        name = extra_path.stem[len("device_hr_"):]
        t, bpm = _load_columns(extra_path, ("t", "bpm"))
        extra[name] = SampledSeries(t, bpm, unit="bpm", source="device_raw")

    device_pal = None
    pal_path = root / "device_pal.csv"
    if pal_path.exists():
        t, level = _load_columns(pal_path, ("t", "level"))
        device_pal = SampledSeries(t, level, unit="level", source="device")

    record = SessionRecord(profile=profile, ecg=ecg, device_hr=device_hr,
                           accel=accel, steps=steps_series, schedule=schedule,
                           fs_ecg=fs_ecg, fs_acc=fs_acc,
                           extra_devices=extra, device_pal=device_pal)
    return record.validate()


def write_session(session: SessionRecord, path, truth_hr: SampledSeries | None = None):
    """Write a session directory in the exact schemas read by load_session."""
    root = Path(path)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {root}: {exc}") from exc

    p = session.profile
    try:
        with (root / "meta.csv").open("w", newline="") as fh:
            fh.write("fs_ecg,fs_acc,participant_id,gender,bmi,psqi\n")
            fh.write(f"{fmt(session.fs_ecg)},{fmt(session.fs_acc)},"
                     f"{p.id},{p.gender},{fmt(p.bmi)},{int(p.psqi)}\n")
    except OSError as exc:
        raise IoError(f"cannot write {root / 'meta.csv'}: {exc}") from exc

    _write_csv(root / "ecg.csv", ("t", "mv"), (session.ecg.t, session.ecg.v))
    _write_csv(root / "device_hr.csv", ("t", "bpm"),
               (session.device_hr.t, session.device_hr.v))
    _write_csv(root / "accel.csv", ("t", "x", "y", "z"),
               (session.accel.t, session.accel.x, session.accel.y, session.accel.z))
    _write_csv(root / "steps.csv", ("t", "cumulative_steps"),
               (session.steps.t, session.steps.v))
    try:
        with (root / "schedule.csv").open("w", newline="") as fh:
            fh.write("state,t_start,t_end\n")
            for state, t0, t1 in session.schedule:
                fh.write(f"{state},{fmt(t0)},{fmt(t1)}\n")
    except OSError as exc:
        raise IoError(f"cannot write {root / 'schedule.csv'}: {exc}") from exc

    for name in sorted(session.extra_devices):
        series = session.extra_devices[name]
        _write_csv(root / f"device_hr_{name}.csv", ("t", "bpm"), (series.t, series.v))
    if session.device_pal is not None:
        _write_csv(root / "device_pal.csv", ("t", "level"),
                   (session.device_pal.t, session.device_pal.v))
    if truth_hr is not None:
        _write_csv(root / "truth_hr.csv", ("t", "bpm"), (truth_hr.t, truth_hr.v))


def load_cohort(root):
    """Load every session directory under root, sorted by directory name."""
    root = Path(root)
    sessions = []
    for entry in sorted(root.iterdir()):
        if entry.is_dir() and (entry / "meta.csv").exists():
            sessions.append(load_session(entry))
    if not sessions:
        raise InsufficientDataError(f"no session directories under {root}")
    return sessions


# ---------------------------------------------------------------------------
# Report writing


def write_report(report, path):
    """Write an EvalReport as a schema-stable CSV.

    One row per method; per-state MAE/SE pairs at two decimals mirroring
    how device-error tables are usually printed, plus error reduction,
    paired-test and agreement statistics.  Output bytes depend only on the
    report contents.
    """
    path = Path(path)
    states = list(report.states)
    header = ["method"]
    for state in states:
        low = state.lower()
        header += [f"{low}_mae", f"{low}_se", f"{low}_n",
                   f"{low}_error_reduction_pct", f"{low}_significant",
                   f"{low}_t_stat", f"{low}_t_dof", f"{low}_p_value",
                   f"{low}_ba_mean_diff", f"{low}_ba_sd",
                   f"{low}_ba_loa_low", f"{low}_ba_loa_high",
                   f"{low}_ba_n_outside"]
    lines = [",".join(header)]
    for method in report.methods:
        cells = [method]
        for state in states:
            entry = report.entries.get((method, state))
            if entry is None or entry.n == 0:
                cells += [""] * 13
                continue
            cells += [f"{entry.mae:.2f}", f"{entry.se:.2f}", str(entry.n)]
            if entry.error_reduction_pct is None:
                cells += ["", ""]
            else:
                cells += [f"{entry.error_reduction_pct:.2f}",
                          "*" if entry.significant else ""]
            if entry.t_stat is None:
                cells += ["", "", ""]
            else:
                cells += [f"{entry.t_stat:.4f}", str(entry.t_dof),
                          fmt(entry.p_value)]
            ba = entry.bland_altman
            if ba is None:
                cells += [""] * 5
            else:
                cells += [f"{ba.mean_diff:.4f}", f"{ba.sd_diff:.4f}",
                          f"{ba.loa_low:.4f}", f"{ba.loa_high:.4f}",
                          str(ba.n_outside)]
        lines.append(",".join(cells))
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_table(path, header, rows):
    """Write a generic report table with locale-independent formatting."""
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(cell if isinstance(cell, str) else fmt(cell)
                              for cell in row))
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
