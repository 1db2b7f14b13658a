"""Feature matrix construction, statistical feature selection,
train-set standardization, and rolling-window expansion.

The matrix lives on the 15-second analysis grid.  Selection combines a
univariate linear-regression F-test with a k-nearest-neighbour mutual
information estimate (Kraskov for continuous columns, the Ross
discrete-continuous variant for categorical ones); a feature survives if
it passes either test.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma
from scipy.stats import f as f_dist

from .activity import lookup_interval, lookup_minute
from .errors import (ConfigError, DegenerateFeatureError, InsufficientDataError,
                     ValidationError)
from .io import ALL_STATES, SampledSeries, state_at

BASE_COLUMNS = ("device_hr", "pal", "step_rate", "gender", "psqi", "bmi")
ROLLED_COLUMNS = ("device_hr", "pal", "step_rate")
CATEGORICAL_COLUMNS = ("pal", "gender", "psqi")

GENDER_CODES = {"female": 0.0, "male": 1.0}


@dataclass
class FeatureMatrix:
    """Rows on the analysis grid: named features, target bpm, state, owner."""

    t: np.ndarray
    participant: np.ndarray
    state: np.ndarray
    columns: list
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.participant = np.asarray(self.participant, dtype=object)
        self.state = np.asarray(self.state, dtype=object)
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.shape != (self.t.size, len(self.columns)):
            raise ValidationError("feature matrix shape mismatch")

    def __len__(self):
        return self.t.size

    def subset(self, mask) -> "FeatureMatrix":
        mask = np.asarray(mask, dtype=bool)
        return FeatureMatrix(self.t[mask], self.participant[mask],
                             self.state[mask], list(self.columns),
                             self.X[mask], self.y[mask])

    def state_mask(self, state: str) -> np.ndarray:
        if state == ALL_STATES:
            return np.ones(len(self), dtype=bool)
        return self.state == state

    def participant_mask(self, ids) -> np.ndarray:
        ids = set(ids)
        return np.array([p in ids for p in self.participant], dtype=bool)

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.columns.index(name)]

    def with_columns(self, names) -> "FeatureMatrix":
        idx = [self.columns.index(n) for n in names]
        return FeatureMatrix(self.t, self.participant, self.state,
                             list(names), self.X[:, idx], self.y)


@dataclass
class ProcessedSession:
    """Per-session grid-ready streams produced by the signal and activity stages."""

    profile: object
    schedule: list
    truth_grid: SampledSeries
    device_grid: SampledSeries
    pal_levels: dict            # column name -> per-minute ordinal series
    step_rate: SampledSeries
    extra_device_grids: dict = field(default_factory=dict)


def assemble_matrix(processed, pal_source: str = "pal") -> FeatureMatrix:
    """One row per grid point that has the target and every feature.

    Gender is encoded 0/1, activity level ordinally 0-3.  Rows with any
    missing cell are dropped rather than imputed.
    """
    fusion_cols = sorted({name for s in processed for name in s.pal_levels
                          if name != pal_source and name.startswith("fusion_pal_")})
    columns = list(BASE_COLUMNS) + fusion_cols

    rows, ts, pids, states, targets = [], [], [], [], []
    for sess in processed:
        prof = sess.profile
        if prof.gender not in GENDER_CODES:
            raise ValidationError(f"unknown gender {prof.gender!r}")
        gender = GENDER_CODES[prof.gender]
        primary_pal = sess.pal_levels.get(pal_source)
        if primary_pal is None:
            raise ConfigError(f"session {prof.id} lacks activity source {pal_source!r}")
        device_by_t = dict(zip(sess.device_grid.t, sess.device_grid.v))

        for t, target in zip(sess.truth_grid.t, sess.truth_grid.v):
            state = state_at(sess.schedule, t)
            if state is None:
                continue
            device = device_by_t.get(t)
            if device is None:
                continue
            # Device-reported levels are stamped at their own cadence;
            # computed levels are stamped at minute starts.
            if primary_pal.source == "device":
                pal = lookup_interval(primary_pal, t)
            else:
                pal = lookup_minute(primary_pal, t)
            if pal is None:
                continue
            step = lookup_interval(sess.step_rate, t)
            if step is None:
                continue
            fusion_vals = []
            ok = True
            for name in fusion_cols:
                val = lookup_minute(sess.pal_levels[name], t)
                if val is None:
                    ok = False
                    break
                fusion_vals.append(val)
            if not ok:
                continue
            rows.append([device, pal, step, gender, float(prof.psqi),
                         float(prof.bmi)] + fusion_vals)
            ts.append(t)
            pids.append(prof.id)
            states.append(state)
            targets.append(target)

    if not rows:
        raise InsufficientDataError("no usable grid rows across sessions")
    return FeatureMatrix(np.asarray(ts), np.asarray(pids, dtype=object),
                         np.asarray(states, dtype=object), columns,
                         np.asarray(rows, dtype=float), np.asarray(targets))


# ---------------------------------------------------------------------------
# Univariate linear-regression test


def f_test(x, y):
    """F statistic and p-value for the slope-is-zero null of y ~ x.

    F = r^2 / (1 - r^2) * (n - 2) with r the sample correlation; the
    p-value is the upper tail of F(1, n-2).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 3:
        raise InsufficientDataError("f_test needs n >= 3")
    sx = x.std()
    if sx == 0:
        raise DegenerateFeatureError("constant feature column")
    sy = y.std()
    if sy == 0:
        return 0.0, 1.0
    r = float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))
    r2 = min(r * r, 1.0)
    if 1.0 - r2 < 1e-15:
        return float("inf"), 0.0
    stat = r2 / (1.0 - r2) * (n - 2)
    return stat, float(f_dist.sf(stat, 1, n - 2))


# ---------------------------------------------------------------------------
# Mutual information estimators (natural log units)


def _count_within(sorted_vals, centers, radii, strict=True):
    """Per-point neighbour counts within a radius on a sorted 1-D array.

    Counts include the point itself.  strict counts |d| < r, otherwise
    |d| <= r.
    """
    eps = 1e-12 if strict else -1e-12
    lo = np.searchsorted(sorted_vals, centers - radii + eps, side="left")
    hi = np.searchsorted(sorted_vals, centers + radii - eps, side="right")
    return hi - lo


def _mi_continuous(x, y, k):
    """Kraskov estimator (variant 1, Chebyshev metric) for two scalars.

    Both variables are standardized first so the joint max-norm ball is
    not distorted by units; the estimate is then exactly invariant under
    positive rescaling.  Points with duplicate joint coordinates fall back
    to counting the duplicate cluster, which keeps the estimate finite on
    tied data.
    """
    n = x.size
    if x.std() > 0:
        x = (x - x.mean()) / x.std()
    if y.std() > 0:
        y = (y - y.mean()) / y.std()
    z = np.column_stack([x, y])
    tree = cKDTree(z)
    dist, _ = tree.query(z, k=k + 1, p=np.inf)
    eps_k = dist[:, k]

    xs = np.sort(x)
    ys = np.sort(y)
    nx = _count_within(xs, x, eps_k, strict=True)
    ny = _count_within(ys, y, eps_k, strict=True)
    k_terms = np.full(n, float(digamma(k)))

    tied = eps_k <= 0.0
    if np.any(tied):
        idx = np.nonzero(tied)[0]
        kp = np.array([len(tree.query_ball_point(z[i], 1e-12, p=np.inf))
                       for i in idx], dtype=float)
        k_terms[idx] = digamma(kp)
        nx[idx] = _count_within(xs, x[idx], np.full(idx.size, 1e-12), strict=False)
        ny[idx] = _count_within(ys, y[idx], np.full(idx.size, 1e-12), strict=False)

    mi = float(digamma(n) + np.mean(k_terms - digamma(nx) - digamma(ny)))
    return max(mi, 0.0)


def _mi_discrete(x, y, k):
    """Ross estimator for a categorical x against a continuous y."""
    labels, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    usable = counts[inverse] > 1
    if not np.any(usable):
        return 0.0
    y_used = y[usable]
    inv_used = inverse[usable]
    n = y_used.size
    ys = np.sort(y_used)

    radii = np.empty(n)
    k_used = np.empty(n)
    for label_idx in range(labels.size):
        members = np.nonzero(inv_used == label_idx)[0]
        if members.size == 0:
            continue
        ky = min(k, members.size - 1)
        my = np.sort(y_used[members])
        for i in members:
            # distance to the ky-th nearest same-class neighbour in y
            left = np.searchsorted(my, y_used[i])
            lo = max(0, left - ky - 1)
            hi = min(my.size, left + ky + 1)
            window = np.abs(my[lo:hi] - y_used[i])
            window = np.sort(window)
            radii[i] = window[ky]  # window[0] == 0 is the point itself
            k_used[i] = ky

    # neighbours within the closed radius, self excluded, k-th included
    m = _count_within(ys, y_used, radii, strict=False) - 1
    class_sizes = np.array([np.count_nonzero(inv_used == inv_used[i])
                            for i in range(n)], dtype=float)
    mi = float(digamma(n) + np.mean(digamma(k_used) - digamma(class_sizes)
                                    - digamma(np.maximum(m, 1))))
    return max(mi, 0.0)


def mutual_information(x, y, k: int = 3, discrete_x: bool = False) -> float:
    """k-NN mutual information estimate between a feature and the target."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if k < 1:
        raise ConfigError("k must be >= 1")
    if x.size != y.size:
        raise ValidationError("mutual_information: length mismatch")
    if x.size <= k:
        raise InsufficientDataError(f"need n > k, got n={x.size}, k={k}")
    if discrete_x:
        return _mi_discrete(x, y, k)
    return _mi_continuous(x, y, k)


# ---------------------------------------------------------------------------
# Feature selection


@dataclass
class SelectionEntry:
    feature: str
    state: str
    f_statistic: float
    p_value: float
    mi_nats: float
    selected: bool


@dataclass
class SelectionReport:
    p_threshold: float
    mi_threshold: float
    entries: dict  # (feature, state) -> SelectionEntry

    def selected_features(self, state: str):
        return [f for (f, s), e in self.entries.items()
                if s == state and e.selected]


def select_features(matrix: FeatureMatrix, p_threshold: float = 0.05,
                    mi_threshold: float = 0.3, k: int = 3,
                    states=(*("RS", "LS", "IS"), ALL_STATES),
                    categorical=CATEGORICAL_COLUMNS) -> SelectionReport:
    """Run both dependency tests per feature per state.

    A feature is kept when its linear-test p-value is below p_threshold or
    its mutual-information estimate exceeds mi_threshold.  A constant
    column fails the linear test by convention (p = 1).
    """
    entries = {}
    for state in states:
        mask = matrix.state_mask(state)
        y = matrix.y[mask]
        for j, name in enumerate(matrix.columns):
            x = matrix.X[mask, j]
            if x.size < 3:
                entries[(name, state)] = SelectionEntry(name, state, 0.0, 1.0,
                                                        0.0, False)
                continue
            try:
                stat, p = f_test(x, y)
            except DegenerateFeatureError:
                stat, p = 0.0, 1.0
            is_cat = name in categorical or name.startswith("fusion_pal_")
            if x.size > k and np.ptp(x) > 0:
                mi = mutual_information(x, y, k=k, discrete_x=is_cat)
            else:
                mi = 0.0
            selected = (p < p_threshold) or (mi > mi_threshold)
            entries[(name, state)] = SelectionEntry(name, state, stat, p, mi,
                                                    selected)
    return SelectionReport(p_threshold, mi_threshold, entries)


# ---------------------------------------------------------------------------
# Standardization


@dataclass
class ScalerStats:
    columns: list
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # bool flags; constant columns pass through


def fit_scaler(matrix: FeatureMatrix) -> ScalerStats:
    """Per-column mean/std from training rows (population std)."""
    if len(matrix) < 2:
        raise InsufficientDataError("need >= 2 training rows to fit a scaler")
    mean = matrix.X.mean(axis=0)
    std = matrix.X.std(axis=0)
    constant = std <= 0.0
    return ScalerStats(list(matrix.columns), mean, std, constant)


def apply_scaler(stats: ScalerStats, matrix: FeatureMatrix) -> FeatureMatrix:
    if list(matrix.columns) != list(stats.columns):
        raise ValidationError("scaler/matrix column mismatch")
    scaled = matrix.X.copy()
    active = ~stats.constant
    scaled[:, active] = (scaled[:, active] - stats.mean[active]) / stats.std[active]
    return FeatureMatrix(matrix.t, matrix.participant, matrix.state,
                         list(matrix.columns), scaled, matrix.y)


# ---------------------------------------------------------------------------
# Rolling windows


@dataclass
class WindowSpec:
    size_points: int
    cadence_s: float = 15.0
    rolled_columns: tuple = ROLLED_COLUMNS

    def __post_init__(self):
        if self.size_points < 1:
            raise ConfigError("window size must be >= 1")


def contiguous_segments(t: np.ndarray, cadence_s: float):
    """Index ranges [start, end) of runs spaced exactly one grid step apart."""
    if t.size == 0:
        return []
    breaks = np.nonzero(np.abs(np.diff(t) - cadence_s) > 1e-6)[0]
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks + 1, [t.size]])
    return list(zip(starts.tolist(), ends.tolist()))


def build_rolling_windows(matrix: FeatureMatrix, spec: WindowSpec) -> FeatureMatrix:
    """Expand rolled columns into trailing-window blocks.

    The row at grid index t gains lagged copies col[t-w+1 .. t] of each
    rolled column; the first w-1 rows of every contiguous segment have no
    full window and are dropped.  Static columns ride along unchanged.
    Gaps in the grid split segments; nothing is imputed across them.
    """
    w = spec.size_points
    for name in spec.rolled_columns:
        if name not in matrix.columns:
            raise ConfigError(f"rolled column {name!r} not in matrix")
    static_cols = [c for c in matrix.columns if c not in spec.rolled_columns]
    rolled_idx = [matrix.columns.index(c) for c in spec.rolled_columns]
    static_idx = [matrix.columns.index(c) for c in static_cols]

    out_columns = [f"{name}_m{lag}" for name in spec.rolled_columns
                   for lag in range(w - 1, -1, -1)] + static_cols

    blocks, keep_rows = [], []
    order = np.lexsort((matrix.t, matrix.participant.astype(str)))
    pid_sorted = matrix.participant[order]
    for pid in sorted(set(pid_sorted.tolist())):
        rows = order[pid_sorted == pid]
        t_p = matrix.t[rows]
        for start, end in contiguous_segments(t_p, spec.cadence_s):
            if end - start < w:
                continue
            for i in range(start + w - 1, end):
                window = rows[i - w + 1: i + 1]
                lagged = [matrix.X[window, j] for j in rolled_idx]
                blocks.append(np.concatenate(lagged))
                keep_rows.append(rows[i])

    if not blocks:
        return FeatureMatrix(np.empty(0), np.empty(0, dtype=object),
                             np.empty(0, dtype=object), out_columns,
                             np.empty((0, len(out_columns))), np.empty(0))
    keep_rows = np.asarray(keep_rows)
    X = np.column_stack([np.vstack(blocks), matrix.X[keep_rows][:, static_idx]]) \
        if static_idx else np.vstack(blocks)
    return FeatureMatrix(matrix.t[keep_rows], matrix.participant[keep_rows],
                         matrix.state[keep_rows], out_columns, X,
                         matrix.y[keep_rows])
