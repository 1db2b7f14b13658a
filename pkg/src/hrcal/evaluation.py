"""Leave-one-subject-out evaluation and the reporting statistics.

Folds hold one participant out for testing and the cyclically next one
for validation.  The statistics here are the ones the report tables need:
MAE with a standard error over participants, paired two-tailed t-tests,
one-way repeated-measures ANOVA with pairwise mean differences,
Bland-Altman limits of agreement, and error-reduction percentages.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import f as f_dist
from scipy.stats import t as t_dist

from .errors import ConfigError, DomainError, InsufficientDataError
from .io import ALL_STATES, STATES, SampledSeries


@dataclass(frozen=True)
class Fold:
    test: str
    validation: str
    train: tuple

    def __post_init__(self):
        overlap = set(self.train) & {self.test, self.validation}
        if overlap or self.test == self.validation:
            raise ConfigError(f"fold roles overlap: {self}")


@dataclass
class FoldPlan:
    folds: list
    seed: int = 0

    def __iter__(self):
        return iter(self.folds)

    def __len__(self):
        return len(self.folds)


def make_folds(participant_ids, seed: int = 0) -> FoldPlan:
    """Participant i is the test subject of fold i; validation is the
    cyclically next participant; everyone else trains.  The seed is kept
    as bookkeeping only, so fold layouts are reproducible by construction.
    """
    ids = list(participant_ids)
    if len(ids) < 3:
        raise ConfigError(f"need >= 3 participants for held-out folds, got {len(ids)}")
    if len(set(ids)) != len(ids):
        raise ConfigError("participant ids must be unique")
    folds = []
    for i, pid in enumerate(ids):
        val = ids[(i + 1) % len(ids)]
        train = tuple(p for p in ids if p not in (pid, val))
        folds.append(Fold(test=pid, validation=val, train=train))
    return FoldPlan(folds, seed=seed)


# ---------------------------------------------------------------------------
# Errors and agreement


def mae(pred, truth) -> float:
    """Mean absolute error over common grid points.

    Accepts SampledSeries (aligned by timestamp intersection) or plain
    arrays of equal length.
    """
    if isinstance(pred, SampledSeries) and isinstance(truth, SampledSeries):
        common, ia, ib = np.intersect1d(pred.t, truth.t, return_indices=True)
        if common.size == 0:
            raise InsufficientDataError("series share no grid points")
        a, b = pred.v[ia], truth.v[ib]
    else:
        a = np.asarray(pred, dtype=float)
        b = np.asarray(truth, dtype=float)
        if a.size != b.size:
            raise InsufficientDataError("length mismatch")
        if a.size == 0:
            raise InsufficientDataError("no points to compare")
    return float(np.mean(np.abs(a - b)))


def mae_se(per_participant) -> tuple:
    """(mean, standard error) across per-participant MAEs (sample sd / sqrt n)."""
    vals = np.asarray(list(per_participant), dtype=float)
    if vals.size == 0:
        raise InsufficientDataError("no participants")
    if vals.size == 1:
        return float(vals[0]), 0.0
    return float(np.mean(vals)), float(np.std(vals, ddof=1) / np.sqrt(vals.size))


@dataclass
class StatTestResult:
    statistic: float
    dof: object
    p_value: float
    significant: bool


def paired_t_test(errors_a, errors_b) -> StatTestResult:
    """Two-tailed paired t-test on per-point error pairs.

    Zero-variance differences degenerate: p = 1 for a zero mean, p = 0
    (flagged significant) for a nonzero mean.
    """
    a = np.asarray(errors_a, dtype=float)
    b = np.asarray(errors_b, dtype=float)
    if a.size != b.size:
        raise InsufficientDataError("paired test needs equal lengths")
    n = a.size
    if n < 2:
        raise InsufficientDataError("paired test needs n >= 2")
    d = a - b
    sd = float(np.std(d, ddof=1))
    mean = float(np.mean(d))
    if sd == 0.0:
        if mean == 0.0:
            return StatTestResult(0.0, n - 1, 1.0, False)
        return StatTestResult(float(np.inf) if mean > 0 else float(-np.inf),
                              n - 1, 0.0, True)
    stat = mean / (sd / np.sqrt(n))
    p = 2.0 * float(t_dist.sf(abs(stat), n - 1))
    return StatTestResult(float(stat), n - 1, p, p < 0.05)


def rm_anova(per_participant_mae) -> StatTestResult:
    """One-way repeated-measures F over a participants x methods matrix."""
    M = np.asarray(per_participant_mae, dtype=float)
    if M.ndim != 2 or M.shape[0] < 2 or M.shape[1] < 2:
        raise InsufficientDataError("need >= 2 participants and >= 2 methods")
    n, k = M.shape
    grand = M.mean()
    ss_methods = n * float(np.sum((M.mean(axis=0) - grand) ** 2))
    ss_subjects = k * float(np.sum((M.mean(axis=1) - grand) ** 2))
    ss_total = float(np.sum((M - grand) ** 2))
    ss_error = max(ss_total - ss_methods - ss_subjects, 0.0)
    df_m = k - 1
    df_e = (k - 1) * (n - 1)
    if ss_methods <= 1e-15:
        return StatTestResult(0.0, (df_m, df_e), 1.0, False)
    if ss_error <= 1e-15:
        return StatTestResult(float(np.inf), (df_m, df_e), 0.0, True)
    stat = (ss_methods / df_m) / (ss_error / df_e)
    p = float(f_dist.sf(stat, df_m, df_e))
    return StatTestResult(float(stat), (df_m, df_e), p, p < 0.05)


def pairwise_diffs(per_participant_mae, method_names):
    """Ordered pairwise mean differences with SE and paired significance.

    Returns rows (method_a, method_b, mean_diff, se, p_value, significant)
    for every ordered pair, mirroring how device-comparison tables print
    both directions.
    """
    M = np.asarray(per_participant_mae, dtype=float)
    names = list(method_names)
    if M.shape[1] != len(names):
        raise ConfigError("method count mismatch")
    rows = []
    for i, name_a in enumerate(names):
        for j, name_b in enumerate(names):
            if i == j:
                continue
            d = M[:, i] - M[:, j]
            mean = float(np.mean(d))
            se = float(np.std(d, ddof=1) / np.sqrt(d.size)) if d.size > 1 else 0.0
            test = paired_t_test(M[:, i], M[:, j])
            rows.append((name_a, name_b, mean, se, test.p_value, test.significant))
    return rows


@dataclass
class BlandAltman:
    mean_diff: float
    sd_diff: float
    loa_low: float
    loa_high: float
    n_outside: int
    n: int


def bland_altman(a, b) -> BlandAltman:
    """Limits of agreement for paired measurements (sample sd, 1.96 factor)."""
    if isinstance(a, SampledSeries) and isinstance(b, SampledSeries):
        common, ia, ib = np.intersect1d(a.t, b.t, return_indices=True)
        av, bv = a.v[ia], b.v[ib]
    else:
        av = np.asarray(a, dtype=float)
        bv = np.asarray(b, dtype=float)
    if av.size < 2:
        raise InsufficientDataError("Bland-Altman needs >= 2 pairs")
    d = av - bv
    mean = float(np.mean(d))
    sd = float(np.std(d, ddof=1))
    lo, hi = mean - 1.96 * sd, mean + 1.96 * sd
    outside = int(np.count_nonzero(np.abs(d - mean) > 1.96 * sd))
    return BlandAltman(mean, sd, lo, hi, outside, int(d.size))


def error_reduction(mae_raw: float, mae_cal: float) -> float:
    """Percent error reduction of a calibrated stream against the raw one."""
    if mae_raw <= 0:
        raise DomainError("raw MAE must be positive")
    return 100.0 * (mae_raw - mae_cal) / mae_raw


# ---------------------------------------------------------------------------
# Grid search


@dataclass
class GridCell:
    spec: object
    val_maes: list
    mean_val_mae: float
    failed: bool = False
    failure: str = ""


def grid_search(grid, folds, evaluate_cell):
    """Pick the spec with the lowest mean validation MAE across folds.

    evaluate_cell(spec, fold) returns that fold's validation MAE; any
    exception it raises marks the whole spec failed and excluded.  Ties go
    to the earlier grid entry, and the per-spec table is returned for the
    report.
    """
    grid = list(grid)
    if not grid:
        raise ConfigError("empty hyperparameter grid")
    table = []
    best = None
    for spec in grid:
        maes = []
        failure = ""
        for fold in folds:
            try:
                maes.append(float(evaluate_cell(spec, fold)))
            except Exception as exc:  # a failed fit disqualifies the spec
                failure = f"{type(exc).__name__}: {exc}"
                break
        if failure:
            table.append(GridCell(spec, [], float("nan"), True, failure))
            continue
        mean_mae = float(np.mean(maes))
        cell = GridCell(spec, maes, mean_mae)
        table.append(cell)
        if best is None or mean_mae < best.mean_val_mae - 1e-12:
            best = cell
    if best is None:
        raise ConfigError("every grid cell failed")
    return best.spec, table


# ---------------------------------------------------------------------------
# Report assembly


@dataclass
class MethodStateStats:
    mae: float
    se: float
    n: int
    error_reduction_pct: float | None = None
    t_stat: float | None = None
    t_dof: int | None = None
    p_value: float | None = None
    significant: bool = False
    bland_altman: BlandAltman | None = None


@dataclass
class EvalReport:
    methods: list
    states: tuple = (*STATES, ALL_STATES)
    entries: dict = field(default_factory=dict)  # (method, state) -> stats

    def add(self, method, state, stats: MethodStateStats):
        if method not in self.methods:
            self.methods.append(method)
        self.entries[(method, state)] = stats
