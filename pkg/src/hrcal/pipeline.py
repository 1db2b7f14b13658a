"""End-to-end orchestration: extraction, features, selection, tuning,
held-out evaluation, and report/figure writing.

Anti-leakage rule enforced throughout: scalers, feature selection, and
model fits only ever see training-fold rows; the validation participant
steers tuning and early stopping; the test participant is scored once.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import signal as sig
from .activity import (compute_counts, counts_to_levels, get_scheme,
                       steps_per_minute)
from .config import PipelineConfig
from .errors import ConfigError, InsufficientDataError, PipelineError
from .evaluation import (EvalReport, MethodStateStats, bland_altman,
                         error_reduction, grid_search, mae, mae_se, make_folds,
                         paired_t_test)
from .features import (BASE_COLUMNS, ROLLED_COLUMNS, FeatureMatrix,
                       ProcessedSession, WindowSpec, apply_scaler,
                       build_rolling_windows, fit_scaler, select_features)
from .io import ALL_STATES, fmt, write_report, write_table
from .models.base import ModelSpec, TrainedModel, make_model, save_model

log = logging.getLogger("hrcal")

PERSONAL_COLUMNS = ("gender", "psqi", "bmi")

# fitted models should reproduce plausible heart rates on their own
# training rows; anything outside this band is flagged, not rejected
GUARDBAND_BPM = (20.0 - 50.0, 250.0 + 50.0)


# ---------------------------------------------------------------------------
# Stage 1: per-session extraction


def extract_truth_grid(session, cfg: PipelineConfig, shifted: bool = True):
    """ECG -> smoothed HR, optionally lag-shifted per state, on the grid."""
    band = sig.FilterSpec(kind="bandpass", low_hz=cfg.ecg_band_low_hz,
                          high_hz=cfg.ecg_band_high_hz,
                          order=cfg.ecg_filter_order)
    hr = sig.ecg_to_hr(session.ecg, band=band, resample_hz=cfg.hr_resample_hz,
                       lowpass_cutoff=cfg.hr_lowpass_cutoff,
                       lowpass_order=cfg.hr_lowpass_order)
    if shifted:
        hr = sig.shift_by_state(hr, session.schedule, cfg.state_shifts())
    grid = sig.align_to_grid(hr, cfg.grid_step_s, cfg.grid_tolerance_s)
    grid.source = "ecg_truth"
    return grid


def process_session(session, cfg: PipelineConfig) -> ProcessedSession:
    truth_grid = extract_truth_grid(session, cfg)
    device_grid = sig.align_to_grid(session.device_hr, cfg.grid_step_s,
                                    cfg.grid_tolerance_s)

    counts_cache = {}

    def counts_for(mode):
        if mode not in counts_cache:
            counts_cache[mode] = compute_counts(
                session.accel, mode, counts_per_g_s=cfg.counts_per_g_s,
                deadband_g=cfg.count_deadband_g)
        return counts_cache[mode]

    pal_levels = {}
    if cfg.pal_scheme == "device":
        if session.device_pal is None:
            raise ConfigError(
                f"session {session.profile.id}: pal_scheme=device but no "
                "device_pal.csv stream")
        pal_levels["pal"] = session.device_pal
    else:
        scheme = get_scheme(cfg.pal_scheme)
        pal_levels["pal"] = counts_to_levels(counts_for(scheme.axis_mode), scheme)
    for name in cfg.fusion_pal_schemes:
        scheme = get_scheme(name)
        pal_levels[f"fusion_pal_{name}"] = counts_to_levels(
            counts_for(scheme.axis_mode), scheme)

    step_rate = steps_per_minute(session.steps)
    extra = {name: sig.align_to_grid(series, cfg.grid_step_s, cfg.grid_tolerance_s)
             for name, series in sorted(session.extra_devices.items())}
    return ProcessedSession(profile=session.profile, schedule=session.schedule,
                            truth_grid=truth_grid, device_grid=device_grid,
                            pal_levels=pal_levels, step_rate=step_rate,
                            extra_device_grids=extra)


def process_cohort(sessions, cfg: PipelineConfig):
    return [process_session(s, cfg) for s in sessions]


# ---------------------------------------------------------------------------
# Fold-level training and scoring


@dataclass
class CellResult:
    val_mae: float
    test: dict | None = None  # participant, t, state, y, pred, raw arrays
    trained: object | None = None


def _guard_no_leakage(rows: FeatureMatrix, fold):
    held_out = {fold.test, fold.validation}
    seen = set(rows.participant.tolist())
    if seen & held_out:
        raise PipelineError("fold", f"held-out rows leaked into training: "
                                    f"{sorted(seen & held_out)}")


def evaluate_spec_on_fold(matrix: FeatureMatrix, fold, spec: ModelSpec,
                          state: str, feature_names, seed: int,
                          collect_test: bool = False,
                          raw_column: str = "device_hr",
                          keep_model: bool = False) -> CellResult:
    smask = matrix.state_mask(state)
    train_mask = smask & matrix.participant_mask(fold.train)
    val_mask = smask & matrix.participant_mask([fold.validation])
    test_mask = smask & matrix.participant_mask([fold.test])
    if train_mask.sum() < 4 or val_mask.sum() == 0:
        raise InsufficientDataError(
            f"state {state}: fold {fold.test} lacks train/validation rows")

    sub = matrix.with_columns(feature_names)
    train = sub.subset(train_mask)
    _guard_no_leakage(train, fold)
    scaler = fit_scaler(train)
    strain = apply_scaler(scaler, train)
    sval = apply_scaler(scaler, sub.subset(val_mask))

    model = make_model(spec, seed=seed)
    if spec.algorithm == "mlp":
        model.fit(strain.X, strain.y, X_val=sval.X, y_val=sval.y)
    else:
        model.fit(strain.X, strain.y)
    check_guardband(model, strain.X, f"{spec.algorithm}/{state}/{fold.test}")
    val_mae = mae(model.predict(sval.X), sval.y)

    result = CellResult(val_mae=val_mae)
    if collect_test:
        if test_mask.sum() == 0:
            result.test = None
        else:
            stest = apply_scaler(scaler, sub.subset(test_mask))
            pred = model.predict(stest.X)
            raw = matrix.column(raw_column)[test_mask]
            result.test = {
                "participant": fold.test,
                "t": matrix.t[test_mask],
                "state": matrix.state[test_mask],
                "y": matrix.y[test_mask],
                "pred": np.asarray(pred, dtype=float),
                "raw": raw,
            }
    if keep_model:
        result.trained = TrainedModel(
            algorithm=spec.algorithm, model=model,
            feature_names=list(feature_names), scaler=scaler,
            metadata={"state": state, "test_participant": fold.test,
                      "spec": spec.label(), "seed": seed})
    return result


def check_guardband(model, X_train, label, limit=256):
    """Flag fits whose own-training predictions leave the plausible band."""
    preds = model.predict(X_train[:limit])
    if (not np.all(np.isfinite(preds))
            or np.any(preds < GUARDBAND_BPM[0])
            or np.any(preds > GUARDBAND_BPM[1])):
        log.warning("%s: training predictions outside guardband "
                    "[%g, %g] bpm", label, *GUARDBAND_BPM)
        return False
    return True


def _cell_worker(payload):
    key, matrix, fold, spec, state, features, seed = payload
    try:
        res = evaluate_spec_on_fold(matrix, fold, spec, state, features, seed)
        return key, ("ok", res.val_mae)
    except Exception as exc:  # marshalled back so a bad spec fails cleanly
        return key, ("err", f"{type(exc).__name__}: {exc}")


def run_cells(tasks, jobs: int = 1):
    """Evaluate grid cells, in parallel when jobs > 1.

    Results come back keyed, so the reduction never depends on the
    execution schedule.
    """
    results = {}
    if jobs <= 1:
        for payload in tasks:
            key, res = _cell_worker(payload)
            results[key] = res
        return results
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for key, res in pool.map(_cell_worker, tasks, chunksize=1):
            results[key] = res
    return results


def fold_seed(base_seed: int, fold_index: int) -> int:
    return (base_seed * 1_000_003 + fold_index * 7919) % (2 ** 31 - 1)


# ---------------------------------------------------------------------------
# Selection bookkeeping


@dataclass
class FoldSelections:
    """Per (state, fold) selection reports over the base candidate columns."""

    reports: dict = field(default_factory=dict)  # (state, fold_idx) -> report

    def features_for(self, state, fold_idx, candidates):
        report = self.reports[(state, fold_idx)]
        chosen = [c for c in candidates
                  if report.entries[(c, state)].selected]
        if "device_hr" in candidates and "device_hr" not in chosen:
            # the stream being calibrated always rides along
            chosen.insert(0, "device_hr")
        if not chosen:
            chosen = list(candidates)
        return chosen


def select_per_fold(matrix: FeatureMatrix, folds, states, cfg: PipelineConfig):
    sel = FoldSelections()
    for state in states:
        for i, fold in enumerate(folds):
            train = matrix.subset(matrix.participant_mask(fold.train))
            sel.reports[(state, i)] = select_features(
                train, p_threshold=cfg.p_threshold,
                mi_threshold=cfg.mi_threshold, k=cfg.mi_neighbors,
                states=(state,))
    return sel


def selection_rows(sel: FoldSelections, matrix, folds, states, cfg):
    """Aggregate fold-level selection into one wide row per feature.

    Mirrors the usual two-test marker table: per state, the fold-mean
    p-value and dependency estimate with their SEs, a '*' when the linear
    test passes on average, a 'y' when the dependency threshold is
    cleared, and how many folds kept the feature.
    """
    rows = []
    for feature in matrix.columns:
        row = [feature]
        for state in states:
            ps, mis, hits = [], [], 0
            for i in range(len(folds)):
                entry = sel.reports[(state, i)].entries[(feature, state)]
                ps.append(entry.p_value)
                mis.append(entry.mi_nats)
                hits += int(entry.selected)
            p_mean, p_se = mae_se(ps)
            mi_mean, mi_se = mae_se(mis)
            row += [fmt(p_mean), fmt(p_se),
                    "*" if p_mean < cfg.p_threshold else "",
                    fmt(mi_mean), fmt(mi_se),
                    "y" if mi_mean > cfg.mi_threshold else "",
                    f"{hits}/{len(folds)}"]
        rows.append(row)
    return rows


def selection_header(states):
    header = ["feature"]
    for state in states:
        low = state.lower()
        header += [f"{low}_p_mean", f"{low}_p_se", f"{low}_linear_pass",
                   f"{low}_mi_mean", f"{low}_mi_se", f"{low}_mi_pass",
                   f"{low}_selected_folds"]
    return header


# ---------------------------------------------------------------------------
# Full evaluation


@dataclass
class MethodRun:
    """Pooled test-fold outputs for one (method, state) pair."""

    per_participant_mae: dict = field(default_factory=dict)
    t: list = field(default_factory=list)
    participant: list = field(default_factory=list)
    state: list = field(default_factory=list)
    y: list = field(default_factory=list)
    pred: list = field(default_factory=list)
    raw: list = field(default_factory=list)

    def add(self, test):
        if test is None:
            return
        pid = test["participant"]
        self.per_participant_mae[pid] = mae(test["pred"], test["y"])
        self.t.append(test["t"])
        self.participant.extend([pid] * test["t"].size)
        self.state.append(test["state"])
        self.y.append(test["y"])
        self.pred.append(test["pred"])
        self.raw.append(test["raw"])

    def pooled(self, name):
        arrays = getattr(self, name)
        if not arrays:
            return np.empty(0)
        return np.concatenate(arrays)

    def stats(self, raw_mae_mean: float | None) -> MethodStateStats:
        if not self.per_participant_mae:
            return MethodStateStats(0.0, 0.0, 0)
        maes = [self.per_participant_mae[k]
                for k in sorted(self.per_participant_mae)]
        mean, se = mae_se(maes)
        y = self.pooled("y")
        pred = self.pooled("pred")
        raw = self.pooled("raw")
        stats = MethodStateStats(mean, se, int(y.size))
        if raw_mae_mean is not None and raw_mae_mean > 0:
            stats.error_reduction_pct = error_reduction(raw_mae_mean, mean)
            test = paired_t_test(np.abs(raw - y), np.abs(pred - y))
            stats.t_stat = test.statistic
            stats.t_dof = test.dof
            stats.p_value = test.p_value
            stats.significant = test.significant and stats.error_reduction_pct > 0
        if y.size >= 2:
            stats.bland_altman = bland_altman(pred, y)
        return stats


@dataclass
class PipelineResult:
    report: EvalReport
    grid_tables: dict
    best_specs: dict
    selection_rows: list
    methods: dict          # (method, state) -> MethodRun
    matrix: FeatureMatrix
    folds: object
    trained: dict          # (state, fold_idx) -> TrainedModel


def run_evaluation(matrix: FeatureMatrix, cfg: PipelineConfig) -> PipelineResult:
    participants = sorted(set(matrix.participant.tolist()))
    folds = make_folds(participants, seed=cfg.seed)
    states = tuple(cfg.states)
    base_candidates = [c for c in BASE_COLUMNS if c in matrix.columns]
    grid = cfg.model_grid()
    if not grid:
        raise ConfigError("empty hyperparameter grid")

    log.info("selection across %d folds, %d states", len(folds), len(states))
    sel = select_per_fold(matrix, folds, states, cfg)

    rolled = {}
    for w in cfg.rolling_windows:
        rolled[int(w)] = build_rolling_windows(
            matrix, WindowSpec(int(w), cfg.grid_step_s))

    methods: dict = {}
    best_specs: dict = {}
    grid_tables: dict = {}
    trained: dict = {}
    report = EvalReport(methods=[], states=states)

    for state in states:
        # raw device stream scored on the same grid rows as the target
        raw_run = MethodRun()
        for i, fold in enumerate(folds):
            smask = matrix.state_mask(state) & matrix.participant_mask([fold.test])
            if not smask.any():
                continue
            raw_run.add({"participant": fold.test, "t": matrix.t[smask],
                         "state": matrix.state[smask], "y": matrix.y[smask],
                         "pred": matrix.column("device_hr")[smask],
                         "raw": matrix.column("device_hr")[smask]})
        methods[("raw", state)] = raw_run

        tasks = []
        for spec_idx, spec in enumerate(grid):
            for i, fold in enumerate(folds):
                feats = sel.features_for(state, i, base_candidates)
                tasks.append(((spec_idx, i), matrix, fold, spec, state,
                              feats, fold_seed(cfg.seed, i)))
        log.info("grid search: state=%s over %d specs x %d folds",
                 state, len(grid), len(folds))
        cells = run_cells(tasks, jobs=cfg.jobs)

        def evaluate_cell(spec, fold):
            status, value = cells[(grid.index(spec), folds.folds.index(fold))]
            if status == "err":
                raise PipelineError("grid", value)
            return value

        best, table = grid_search(grid, folds, evaluate_cell)
        best_specs[state] = best
        grid_tables[state] = table

        ml_run = MethodRun()
        for i, fold in enumerate(folds):
            feats = sel.features_for(state, i, base_candidates)
            res = evaluate_spec_on_fold(matrix, fold, best, state, feats,
                                        fold_seed(cfg.seed, i),
                                        collect_test=True, keep_model=True)
            ml_run.add(res.test)
            trained[(state, i)] = res.trained
        methods[("ml", state)] = ml_run

        for scheme in cfg.fusion_pal_schemes:
            col = f"fusion_pal_{scheme}"
            run = MethodRun()
            for i, fold in enumerate(folds):
                feats = sel.features_for(state, i, base_candidates)
                entry = sel.reports[(state, i)].entries.get((col, state))
                if entry is not None and entry.selected and col not in feats:
                    feats = feats + [col]
                res = evaluate_spec_on_fold(matrix, fold, best, state, feats,
                                            fold_seed(cfg.seed, i),
                                            collect_test=True)
                run.add(res.test)
            methods[(f"sf_{scheme}", state)] = run

        for w in sorted(rolled):
            rmat = rolled[w]
            run = MethodRun()
            rolled_cols = [f"{name}_m{lag}" for name in ROLLED_COLUMNS
                           for lag in range(w - 1, -1, -1)]
            for i, fold in enumerate(folds):
                feats = sel.features_for(state, i, base_candidates)
                static = [c for c in PERSONAL_COLUMNS if c in feats]
                use = rolled_cols + static
                try:
                    res = evaluate_spec_on_fold(rmat, fold, best, state, use,
                                                fold_seed(cfg.seed, i),
                                                collect_test=True,
                                                raw_column="device_hr_m0")
                except InsufficientDataError:
                    continue
                run.add(res.test)
            methods[(f"rolling_w{w}", state)] = run

    method_names = ["raw", "ml"] + [f"sf_{s}" for s in cfg.fusion_pal_schemes] \
        + [f"rolling_w{w}" for w in sorted(rolled)]
    for state in states:
        raw_mean = None
        if methods[("raw", state)].per_participant_mae:
            raw_mean, _ = mae_se(list(
                methods[("raw", state)].per_participant_mae.values()))
        for name in method_names:
            run = methods.get((name, state))
            if run is None:
                continue
            stats = run.stats(None if name == "raw" else raw_mean)
            report.add(name, state, stats)

    return PipelineResult(report=report, grid_tables=grid_tables,
                          best_specs=best_specs,
                          selection_rows=selection_rows(sel, matrix, folds,
                                                        states, cfg),
                          methods=methods, matrix=matrix, folds=folds,
                          trained=trained)


# ---------------------------------------------------------------------------
# Artifact writing


def write_selection_csv(rows, states, path):
    write_table(path, selection_header(states), rows)


def write_grid_csv(grid_tables, best_specs, path):
    rows = []
    for state in grid_tables:
        best = best_specs[state]
        for cell in grid_tables[state]:
            if cell.failed:
                rows.append([state, cell.spec.label(), "", "", "failed"])
                continue
            _, se = mae_se(cell.val_maes) if len(cell.val_maes) > 1 else (0, 0.0)
            rows.append([state, cell.spec.label(),
                         f"{cell.mean_val_mae:.4f}", f"{se:.4f}",
                         "best" if cell.spec == best else ""])
    write_table(path, ["state", "model", "mean_val_mae", "se_val_mae",
                       "status"], rows)


def write_bland_altman_csv(result: PipelineResult, method: str, path):
    rows = []
    for name in ("raw", method):
        run = result.methods.get((name, ALL_STATES))
        if run is None or not run.per_participant_mae:
            continue
        t = run.pooled("t")
        y = run.pooled("y")
        pred = run.pooled("pred")
        states = run.pooled("state")
        pids = np.asarray(run.participant, dtype=object)
        for i in range(t.size):
            rows.append([name, str(pids[i]), fmt(t[i]), str(states[i]),
                         fmt((pred[i] + y[i]) / 2.0), fmt(pred[i] - y[i])])
    write_table(path, ["method", "participant", "t", "state", "avg", "diff"],
                rows)


def write_timeseries_csv(result: PipelineResult, method: str, path):
    raw = result.methods.get(("raw", ALL_STATES))
    cal = result.methods.get((method, ALL_STATES))
    rows = []
    if raw is not None and cal is not None:
        cal_by_key = {}
        pids = np.asarray(cal.participant, dtype=object)
        t_cal = cal.pooled("t")
        pred_cal = cal.pooled("pred")
        for i in range(t_cal.size):
            cal_by_key[(str(pids[i]), float(t_cal[i]))] = float(pred_cal[i])
        pids_raw = np.asarray(raw.participant, dtype=object)
        t_raw = raw.pooled("t")
        y_raw = raw.pooled("y")
        dev = raw.pooled("pred")
        states = raw.pooled("state")
        order = np.lexsort((t_raw, pids_raw.astype(str)))
        for i in order:
            key = (str(pids_raw[i]), float(t_raw[i]))
            cal_v = cal_by_key.get(key)
            rows.append([str(pids_raw[i]), fmt(t_raw[i]), str(states[i]),
                         fmt(y_raw[i]), fmt(dev[i]),
                         fmt(cal_v) if cal_v is not None else ""])
    write_table(path, ["participant", "t", "state", "truth_bpm",
                       "device_bpm", "calibrated_bpm"], rows)


def write_all_reports(result: PipelineResult, cfg: PipelineConfig, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    method = cfg.chosen_report_method()
    if (method, ALL_STATES) not in result.methods:
        method = "ml"
    write_selection_csv(result.selection_rows, tuple(cfg.states),
                        out / "selection_report.csv")
    write_grid_csv(result.grid_tables, result.best_specs,
                   out / "grid_validation.csv")
    write_report(result.report, out / "eval_report.csv")
    write_bland_altman_csv(result, method, out / "bland_altman.csv")
    write_timeseries_csv(result, method, out / "timeseries.csv")

    from . import plots

    fig_dir = out / "figures"
    plots.render_report_figures(result, method, fig_dir)
    return [out / "selection_report.csv", out / "grid_validation.csv",
            out / "eval_report.csv", out / "bland_altman.csv",
            out / "timeseries.csv"]


def save_fold_models(result: PipelineResult, out_dir):
    models_dir = Path(out_dir) / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    manifest_rows = []
    for (state, fold_idx), tm in sorted(result.trained.items()):
        name = f"{state.lower()}_fold{fold_idx:02d}.json"
        save_model(tm, models_dir / name)
        manifest_rows.append([state, str(fold_idx), tm.metadata["test_participant"],
                              tm.metadata["spec"], name])
    write_table(models_dir / "manifest.csv",
                ["state", "fold", "test_participant", "spec", "file"],
                manifest_rows)
    return models_dir
