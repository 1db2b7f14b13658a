"""Figure rendering for the report path.

Every figure lands next to the delimited outputs as a PNG.  Rendering is
deterministic: the Agg backend, fixed sizes, and pinned PNG metadata, so
two identical runs produce byte-identical images.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import ALL_STATES, STATES

_SAVEFIG_KW = dict(dpi=110, metadata={"Software": "hrcal"})

STATE_COLORS = {"RS": "#4878d0", "LS": "#6acc64", "IS": "#d65f5f"}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, **_SAVEFIG_KW)
    plt.close(fig)


def bland_altman_figure(avg, diff, states, title, path):
    """Scatter of paired differences with mean and 1.96-sd agreement lines."""
    avg = np.asarray(avg, dtype=float)
    diff = np.asarray(diff, dtype=float)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    states = np.asarray(states, dtype=object)
    for state in STATES:
        mask = states == state
        if mask.any():
            ax.scatter(avg[mask], diff[mask], s=6, alpha=0.5,
                       color=STATE_COLORS[state], label=state)
    md = float(np.mean(diff)) if diff.size else 0.0
    sd = float(np.std(diff, ddof=1)) if diff.size > 1 else 0.0
    for level, style in ((md, "-"), (md + 1.96 * sd, "--"), (md - 1.96 * sd, "--")):
        ax.axhline(level, color="goldenrod", linestyle=style, linewidth=1.2)
    ax.set_xlabel("mean of estimate and reference (bpm)")
    ax.set_ylabel("difference (bpm)")
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def timeseries_figure(t, truth, device, calibrated, states, participant, path):
    fig, ax = plt.subplots(figsize=(7.2, 3.6))
    t = np.asarray(t, dtype=float)
    ax.plot(t / 60.0, truth, color="black", linewidth=1.0, label="reference")
    ax.plot(t / 60.0, device, color="#d65f5f", linewidth=0.8, alpha=0.8,
            label="device")
    if calibrated is not None:
        mask = np.isfinite(calibrated)
        ax.plot(t[mask] / 60.0, np.asarray(calibrated)[mask], color="#4878d0",
                linewidth=0.9, label="calibrated")
    states = np.asarray(states, dtype=object)
    changes = [0] + [i for i in range(1, len(states))
                     if states[i] != states[i - 1]] + [len(states)]
    for a, b in zip(changes[:-1], changes[1:]):
        ax.axvspan(t[a] / 60.0, t[min(b, len(t) - 1)] / 60.0,
                   color=STATE_COLORS.get(states[a], "#cccccc"), alpha=0.08)
    ax.set_xlabel("session time (min)")
    ax.set_ylabel("heart rate (bpm)")
    ax.set_title(f"participant {participant}")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def mae_bars_figure(report, path):
    methods = [m for m in report.methods]
    states = list(report.states)
    width = 0.8 / max(len(methods), 1)
    fig, ax = plt.subplots(figsize=(6.8, 4.0))
    xs = np.arange(len(states))
    for k, method in enumerate(methods):
        maes, ses = [], []
        for state in states:
            entry = report.entries.get((method, state))
            maes.append(entry.mae if entry and entry.n else 0.0)
            ses.append(entry.se if entry and entry.n else 0.0)
        ax.bar(xs + k * width, maes, width=width, yerr=ses, capsize=2,
               label=method)
    ax.set_xticks(xs + 0.4 - width / 2)
    ax.set_xticklabels(states)
    ax.set_ylabel("MAE (bpm)")
    ax.set_title("per-state error by method")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def render_report_figures(result, method, fig_dir):
    """All report-path figures: agreement before/after, traces, MAE bars."""
    fig_dir = Path(fig_dir)
    for name, label in (("raw", "before calibration"),
                        (method, "after calibration")):
        run = result.methods.get((name, ALL_STATES))
        if run is None or not run.per_participant_mae:
            continue
        y = run.pooled("y")
        pred = run.pooled("pred")
        bland_altman_figure((pred + y) / 2.0, pred - y, run.pooled("state"),
                            f"agreement {label}",
                            fig_dir / f"bland_altman_{name}.png")

    raw = result.methods.get(("raw", ALL_STATES))
    cal = result.methods.get((method, ALL_STATES))
    if raw is not None and raw.per_participant_mae:
        cal_map = {}
        if cal is not None:
            pids = np.asarray(cal.participant, dtype=object)
            t_cal = cal.pooled("t")
            pred_cal = cal.pooled("pred")
            for i in range(t_cal.size):
                cal_map[(str(pids[i]), float(t_cal[i]))] = float(pred_cal[i])
        pids = np.asarray(raw.participant, dtype=object)
        t = raw.pooled("t")
        y = raw.pooled("y")
        dev = raw.pooled("pred")
        states = raw.pooled("state")
        for pid in sorted({str(p) for p in pids}):
            mask = pids.astype(str) == pid
            order = np.argsort(t[mask])
            tt = t[mask][order]
            cal_vals = np.array([cal_map.get((pid, float(v)), np.nan)
                                 for v in tt])
            timeseries_figure(tt, y[mask][order], dev[mask][order], cal_vals,
                              states[mask][order], pid,
                              fig_dir / f"timeseries_{pid}.png")

    mae_bars_figure(result.report, fig_dir / "mae_by_state.png")


def validation_bars_figure(device_stats, path):
    """Per-device MAE bars per state for the device-validation command.

    device_stats: {device: {state: (mae, se, n)}}
    """
    devices = sorted(device_stats)
    states = (*STATES, ALL_STATES)
    width = 0.8 / max(len(devices), 1)
    fig, ax = plt.subplots(figsize=(6.8, 4.0))
    xs = np.arange(len(states))
    for k, dev in enumerate(devices):
        maes = [device_stats[dev].get(s, (0.0, 0.0, 0))[0] for s in states]
        ses = [device_stats[dev].get(s, (0.0, 0.0, 0))[1] for s in states]
        ax.bar(xs + k * width, maes, width=width, yerr=ses, capsize=2, label=dev)
    ax.set_xticks(xs + 0.4 - width / 2)
    ax.set_xticklabels(states)
    ax.set_ylabel("MAE (bpm)")
    ax.set_title("device validation against the reference")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)
