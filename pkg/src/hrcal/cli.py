"""Batch command-line front end.

Subcommands: synth, extract-hr, features, select, train, evaluate,
validate, run.  Global flags: --config PATH, --seed N, --jobs N, --out DIR.
The HRCAL_LOG environment variable (error|warn|info|debug) sets verbosity.

Exit codes: 0 all requested artifacts written, 2 configuration problems,
1 any stage failure (the diagnostic names the stage).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as hio
from . import pipeline, plots
from .config import PipelineConfig, default_config, load_config
from .errors import ConfigError, HrcalError, PipelineError
from .evaluation import (EvalReport, mae_se, make_folds, pairwise_diffs,
                         rm_anova)
from .features import apply_scaler, assemble_matrix
from .io import ALL_STATES, STATES, fmt, write_table
from .models.base import load_model
from .synth import generate_cohort

log = logging.getLogger("hrcal")

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    level_name = os.environ.get("HRCAL_LOG", "warn").lower()
    if level_name not in _LOG_LEVELS:
        level_name = "warn"
    logging.basicConfig(level=_LOG_LEVELS[level_name],
                        format="%(levelname)s %(name)s: %(message)s")


def _load_pipeline_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.jobs is not None:
        cfg = replace(cfg, jobs=args.jobs)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    return cfg.validate()


def _load_or_generate_sessions(cfg: PipelineConfig, stage: str):
    if cfg.data_dir:
        log.info("loading cohort from %s", cfg.data_dir)
        try:
            sessions = hio.load_cohort(cfg.data_dir)
        except HrcalError as exc:
            raise PipelineError(stage, str(exc)) from exc
        return sessions, None
    log.info("generating synthetic cohort (n=%d, seed=%d)",
             cfg.synth_participants, cfg.seed)
    pairs = generate_cohort(cfg.cohort_config())
    return [s for s, _ in pairs], [t for _, t in pairs]


# ---------------------------------------------------------------------------
# Subcommands


def cmd_synth(cfg: PipelineConfig) -> int:
    out = Path(cfg.out_dir)
    pairs = generate_cohort(cfg.cohort_config())
    for session, truth in pairs:
        hio.write_session(session, out / session.profile.id,
                          truth_hr=truth.truth_hr)
    log.info("wrote %d sessions under %s", len(pairs), out)
    return 0


def cmd_extract_hr(cfg: PipelineConfig) -> int:
    sessions, _ = _load_or_generate_sessions(cfg, "extract-hr")
    out = Path(cfg.out_dir) / "extracted"
    out.mkdir(parents=True, exist_ok=True)
    for session in sessions:
        grid = pipeline.extract_truth_grid(session, cfg)
        write_table(out / f"{session.profile.id}_hr_ecg.csv", ["t", "bpm"],
                    [[fmt(t), fmt(v)] for t, v in zip(grid.t, grid.v)])
    return 0


def _build_matrix(cfg: PipelineConfig, stage: str):
    sessions, _ = _load_or_generate_sessions(cfg, stage)
    processed = pipeline.process_cohort(sessions, cfg)
    return assemble_matrix(processed)


def cmd_features(cfg: PipelineConfig) -> int:
    matrix = _build_matrix(cfg, "features")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = ["participant", "t", "state", "target_bpm"] + list(matrix.columns)
    rows = []
    for i in range(len(matrix)):
        rows.append([str(matrix.participant[i]), fmt(matrix.t[i]),
                     str(matrix.state[i]), fmt(matrix.y[i])]
                    + [fmt(v) for v in matrix.X[i]])
    write_table(out / "features.csv", header, rows)
    return 0


def cmd_select(cfg: PipelineConfig) -> int:
    matrix = _build_matrix(cfg, "select")
    folds = make_folds(sorted(set(matrix.participant.tolist())), seed=cfg.seed)
    sel = pipeline.select_per_fold(matrix, folds, tuple(cfg.states), cfg)
    rows = pipeline.selection_rows(sel, matrix, folds, tuple(cfg.states), cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_selection_csv(rows, tuple(cfg.states),
                                 out / "selection_report.csv")
    return 0


def cmd_train(cfg: PipelineConfig) -> int:
    matrix = _build_matrix(cfg, "train")
    result = pipeline.run_evaluation(matrix, cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.save_fold_models(result, out)
    pipeline.write_grid_csv(result.grid_tables, result.best_specs,
                            out / "grid_validation.csv")
    return 0


def cmd_evaluate(cfg: PipelineConfig) -> int:
    out = Path(cfg.out_dir)
    models_dir = out / "models"
    manifest = models_dir / "manifest.csv"
    if not manifest.exists():
        raise PipelineError("evaluate",
                            f"no trained models under {models_dir}; run "
                            "`hrcal train` first (or `hrcal run`)")
    matrix = _build_matrix(cfg, "evaluate")
    folds = make_folds(sorted(set(matrix.participant.tolist())), seed=cfg.seed)

    entries = []
    for line in manifest.read_text().splitlines()[1:]:
        state, fold_idx, test_pid, _, name = line.split(",")
        entries.append((state, int(fold_idx), test_pid, name))

    report = EvalReport(methods=[], states=tuple(cfg.states))
    runs = {}
    for state in cfg.states:
        raw_run = pipeline.MethodRun()
        ml_run = pipeline.MethodRun()
        for st, fold_idx, test_pid, name in entries:
            if st != state:
                continue
            fold = folds.folds[fold_idx]
            if fold.test != test_pid:
                raise PipelineError("evaluate",
                                    "models were trained on a different cohort "
                                    f"(fold {fold_idx} test {fold.test} != {test_pid})")
            tm = load_model(models_dir / name)
            smask = matrix.state_mask(state) & matrix.participant_mask([fold.test])
            if not smask.any():
                continue
            sub = matrix.with_columns(tm.feature_names).subset(smask)
            X = apply_scaler(tm.scaler, sub).X if tm.scaler else sub.X
            pred = tm.predict(X, feature_names=tm.feature_names)
            device = matrix.column("device_hr")[smask]
            ml_run.add({"participant": fold.test, "t": matrix.t[smask],
                        "state": matrix.state[smask], "y": matrix.y[smask],
                        "pred": np.asarray(pred, dtype=float), "raw": device})
            raw_run.add({"participant": fold.test, "t": matrix.t[smask],
                         "state": matrix.state[smask], "y": matrix.y[smask],
                         "pred": device, "raw": device})
        runs[("raw", state)] = raw_run
        runs[("ml", state)] = ml_run
        raw_mean = None
        if raw_run.per_participant_mae:
            raw_mean, _ = mae_se(list(raw_run.per_participant_mae.values()))
        report.add("raw", state, raw_run.stats(None))
        report.add("ml", state, ml_run.stats(raw_mean))

    hio.write_report(report, out / "eval_report.csv")
    return 0


def cmd_validate(cfg: PipelineConfig) -> int:
    sessions, _ = _load_or_generate_sessions(cfg, "validate")
    device_names = ["wrist"]
    for s in sessions:
        for name in sorted(s.extra_devices):
            if name not in device_names:
                device_names.append(name)
    if len(device_names) < 2:
        log.warning("single device stream: pairwise comparison table will be empty")

    per_state_maes = {}  # (device, state) -> {pid: mae}
    for session in sessions:
        truth = pipeline.extract_truth_grid(session, cfg)
        from . import signal as sig

        streams = {"wrist": session.device_hr}
        streams.update(session.extra_devices)
        for dev, series in streams.items():
            grid = sig.align_to_grid(series, cfg.grid_step_s, cfg.grid_tolerance_s)
            common, ia, ib = np.intersect1d(grid.t, truth.t, return_indices=True)
            if common.size == 0:
                continue
            states = np.asarray([hio.state_at(session.schedule, t)
                                 for t in common], dtype=object)
            err = np.abs(grid.v[ia] - truth.v[ib])
            for state in (*STATES, ALL_STATES):
                mask = np.ones(common.size, bool) if state == ALL_STATES \
                    else states == state
                if mask.any():
                    per_state_maes.setdefault((dev, state), {})[
                        session.profile.id] = float(np.mean(err[mask]))

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mae_rows = []
    device_stats = {}
    for dev in device_names:
        device_stats[dev] = {}
        for state in (*STATES, ALL_STATES):
            maes = per_state_maes.get((dev, state), {})
            if maes:
                mean, se = mae_se(list(maes.values()))
                mae_rows.append([dev, state, f"{mean:.2f}", f"{se:.2f}",
                                 str(len(maes))])
                device_stats[dev][state] = (mean, se, len(maes))
            else:
                mae_rows.append([dev, state, "", "", "0"])
    write_table(out / "validation_mae.csv",
                ["device", "state", "mae", "se", "n"], mae_rows)

    pairwise_rows, anova_rows = [], []
    if len(device_names) >= 2:
        for state in (*STATES, ALL_STATES):
            complete = None
            for dev in device_names:
                pids = set(per_state_maes.get((dev, state), {}))
                complete = pids if complete is None else (complete & pids)
            complete = sorted(complete or [])
            if len(complete) < 2:
                continue
            M = np.array([[per_state_maes[(dev, state)][pid]
                           for dev in device_names] for pid in complete])
            test = rm_anova(M)
            anova_rows.append([state, f"{test.statistic:.4f}",
                               str(test.dof[0]), str(test.dof[1]),
                               fmt(test.p_value),
                               "*" if test.significant else "",
                               str(len(complete))])
            for row in pairwise_diffs(M, device_names):
                a, b, mean_diff, se, p, sig_flag = row
                pairwise_rows.append([state, a, b, f"{mean_diff:.2f}",
                                      f"{se:.2f}", fmt(p),
                                      "*" if sig_flag else ""])
    write_table(out / "validation_pairwise.csv",
                ["state", "device_a", "device_b", "mean_diff", "se",
                 "p_value", "significant"], pairwise_rows)
    write_table(out / "validation_anova.csv",
                ["state", "f_stat", "dof_methods", "dof_error", "p_value",
                 "significant", "n_participants"], anova_rows)
    plots.validation_bars_figure(device_stats,
                                 out / "figures" / "validation_mae.png")
    return 0


def cmd_run(cfg: PipelineConfig) -> int:
    matrix = _build_matrix(cfg, "run")
    result = pipeline.run_evaluation(matrix, cfg)
    out = Path(cfg.out_dir)
    pipeline.write_all_reports(result, cfg, out)
    pipeline.save_fold_models(result, out)
    log.info("reports written under %s", out)
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "extract-hr": cmd_extract_hr,
    "features": cmd_features,
    "select": cmd_select,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "validate": cmd_validate,
    "run": cmd_run,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hrcal",
        description="Post-calibration of wrist-device heart-rate streams "
                    "against ECG-derived ground truth.")
    parser.add_argument("--config", metavar="PATH",
                        help="pipeline config file (key = value lines)")
    parser.add_argument("--seed", type=int, metavar="N",
                        help="override the config seed")
    parser.add_argument("--jobs", type=int, metavar="N",
                        help="parallel workers for fold/grid evaluation")
    parser.add_argument("--out", metavar="DIR",
                        help="override the config output directory")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="|".join(_COMMANDS))
    for name in _COMMANDS:
        sub.add_parser(name)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_pipeline_config(args)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"hrcal {args.command}: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"hrcal {args.command}: {exc}", file=sys.stderr)
        return 1
    except HrcalError as exc:
        print(f"hrcal {args.command}: [{args.command}] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
