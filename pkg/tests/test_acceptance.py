"""Acceptance gate: one test per release criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -v -s``).

Quantitative checks run on seeded synthetic cohorts; solver checks run
against independent brute-force oracles.
"""

import time

import numpy as np

from hrcal import signal as sig
from hrcal.activity import classify_pal, get_scheme
from hrcal.cli import main as cli_main
from hrcal.config import PipelineConfig
from hrcal.evaluation import (bland_altman, error_reduction, mae, mae_se,
                              make_folds, paired_t_test)
from hrcal.features import (WindowSpec, assemble_matrix, build_rolling_windows,
                            f_test, mutual_information)
from hrcal.models.base import GRID_VALUES, ModelSpec
from hrcal.models.gp import GpRegressor, _ard_kernel
from hrcal.models.kernels import KernelSpec, kernel_matrix
from hrcal.models.mlp import init_params, loss_and_grads
from hrcal.models.svr import EpsilonSvr
from hrcal.pipeline import evaluate_spec_on_fold, process_cohort
from hrcal.synth import CohortConfig, generate_cohort, inject_known_miscalibration
from oracles import fd_gradients, permutation_p_value, svr_dual_pgd

from test_features import rolling_matrix


def report(criterion, ok, detail):
    line = f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} — {detail}"
    print(line, flush=True)
    assert ok, line


def test_criterion_01_signal_oracle():
    t0 = time.time()
    cfg = CohortConfig(n_participants=6, seed=606)
    worst = 0.0
    for session, truth in generate_cohort(cfg):
        hr = sig.ecg_to_hr(session.ecg)
        truth_at = np.interp(hr.t, truth.truth_hr.t, truth.truth_hr.v)
        keep = np.ones(len(hr), dtype=bool)
        for _, t_start, t_end in session.schedule:
            for boundary in (t_start, t_end):
                keep &= np.abs(hr.t - boundary) > 10.0
        err = float(np.mean(np.abs(hr.v - truth_at)[keep]))
        worst = max(worst, err)
    elapsed = time.time() - t0
    report(1, worst < 1.0 and elapsed < 60.0,
           f"worst extraction MAE {worst:.3f} bpm (< 1.0), {elapsed:.1f}s (< 60)")


def test_criterion_02_svr_matches_qp_oracle():
    t0 = time.time()
    rng = np.random.default_rng(202)
    worst_obj = worst_pred = 0.0
    for trial in range(30):
        n = int(rng.integers(5, 21))
        d = int(rng.integers(1, 4))
        X = rng.normal(size=(n, d))
        y = np.sin(X).sum(axis=1) + 0.1 * rng.normal(size=n)
        kind = ("rbf", "poly")[trial % 2]
        spec = KernelSpec(kind, gamma=float(rng.choice([0.1, 1.0])),
                          degree=2 if kind == "poly" else None)
        c = float(rng.choice([1.0, 10.0]))
        eps = float(rng.choice([0.01, 0.1]))
        model = EpsilonSvr(spec, c=c, epsilon=eps, tol=1e-6).fit(X, y)
        obj, beta = svr_dual_pgd(X, y, spec, c, eps)
        worst_obj = max(worst_obj, abs(model.dual_objective - obj))
        Xq = rng.normal(size=(8, d))
        oracle_pred = kernel_matrix(spec, Xq, X) @ beta + model.bias
        worst_pred = max(worst_pred,
                         float(np.max(np.abs(model.predict(Xq) - oracle_pred))))
    elapsed = time.time() - t0
    report(2, worst_obj < 1e-3 and worst_pred < 1e-3 and elapsed < 120.0,
           f"30 instances: dual gap {worst_obj:.2e}, pred gap {worst_pred:.2e}, "
           f"{elapsed:.1f}s (< 120)")


def test_criterion_03_gp_matches_direct_inverse():
    rng = np.random.default_rng(303)
    worst_mean = worst_var = 0.0
    for _ in range(20):
        n = int(rng.integers(5, 11))
        X = rng.normal(size=(n, 2))
        y = 70.0 + 5.0 * rng.normal(size=n)
        alpha = float(rng.choice([1e-6, 1e-3, 1e-1]))
        model = GpRegressor(alpha=alpha, optimize_scales=False).fit(X, y)
        Xq = rng.normal(size=(5, 2))
        mean, var = model.predict(Xq, return_var=True)
        K = _ard_kernel(X, X, model.length_scales) + alpha * np.eye(n)
        Kinv = np.linalg.inv(K)
        Ks = _ard_kernel(Xq, X, model.length_scales)
        mean_o = Ks @ Kinv @ (y - y.mean()) + y.mean()
        var_o = 1.0 - np.einsum("ij,jk,ik->i", Ks, Kinv, Ks)
        worst_mean = max(worst_mean, float(np.max(np.abs(mean - mean_o))))
        worst_var = max(worst_var, float(np.max(np.abs(var - var_o))))
    report(3, worst_mean < 1e-8 and worst_var < 1e-8,
           f"20 instances: mean gap {worst_mean:.2e}, var gap {worst_var:.2e} "
           "(< 1e-8)")


def test_criterion_04_mlp_gradients():
    worst = 0.0
    for arch in GRID_VALUES["mlp"]["hidden_layer_sizes"]:
        for batch in range(10):
            rng = np.random.default_rng([404, hash(arch) % (2 ** 31), batch])
            sizes = (4,) + tuple(arch) + (1,)
            params = init_params(sizes, rng)
            X = rng.normal(size=(12, 4))
            y = rng.normal(size=12)
            _, grads = loss_and_grads(params, X, y)
            fd = fd_gradients(lambda: loss_and_grads(params, X, y)[0], params)
            for g_a, g_n in zip(grads, fd):
                scale = max(np.max(np.abs(g_a)), np.max(np.abs(g_n)), 1e-8)
                worst = max(worst, float(np.max(np.abs(g_a - g_n)) / scale))
    report(4, worst < 1e-4,
           f"7 architectures x 10 batches: max relative gradient error "
           f"{worst:.2e} (< 1e-4)")


def test_criterion_05_mutual_information_gaussian():
    rng = np.random.default_rng(505)
    gaps = []
    for rho, closed_form in ((0.0, 0.0), (0.5, 0.1438), (0.9, 0.8304)):
        z = rng.multivariate_normal([0.0, 0.0],
                                    [[1.0, rho], [rho, 1.0]], size=10000)
        est = mutual_information(z[:, 0], z[:, 1], k=3)
        gaps.append(abs(est - closed_form))
    report(5, max(gaps) < 0.07,
           "rho 0/0.5/0.9 gaps " + "/".join(f"{g:.3f}" for g in gaps)
           + " nats (< 0.07)")


def test_criterion_06_f_test_vs_permutation_oracle():
    worst = 0.0
    for i in range(10):
        rng = np.random.default_rng([606, i])
        n = 200
        x = rng.normal(size=n)
        slope = (0.0, 0.05, 0.08, 0.1, 0.12, 0.15, 0.2, 0.25, 0.3, 0.4)[i]
        y = slope * x + rng.normal(size=n)
        _, p = f_test(x, y)
        p_perm = permutation_p_value(x, y, n_perm=10_000, seed=1000 + i)
        worst = max(worst, abs(p - p_perm))
    report(6, worst < 0.02,
           f"10 columns: max |analytic - permutation| p gap {worst:.4f} (< 0.02)")


PRINTED_RANGES = {
    "crouter_va": ((0, 35, 0), (36, 360, 1), (361, 1129, 2), (1130, 10_000, 3)),
    "crouter_vm": ((0, 100, 0), (101, 609, 1), (610, 1809, 2), (1810, 10_000, 3)),
    "freedson_va": ((0, 99, 0), (100, 759, 1), (760, 5724, 2), (5725, 10_000, 3)),
    "troiano_va": ((0, 100, 0), (101, 2019, 1), (2020, 5998, 2), (5999, 10_000, 3)),
}


def test_criterion_07_pal_cutpoints_exhaustive():
    failures = 0
    for name, ranges in PRINTED_RANGES.items():
        scheme = get_scheme(name)
        lookup = np.empty(10_001, dtype=int)
        for lo, hi, level in ranges:
            lookup[lo: hi + 1] = level
        for cpm in range(10_001):
            if classify_pal(float(cpm), scheme) != lookup[cpm]:
                failures += 1
    boundary_ok = (
        classify_pal(35.0, get_scheme("crouter_va")) == 0
        and classify_pal(36.0, get_scheme("crouter_va")) == 1
        and classify_pal(1129.0, get_scheme("crouter_va")) == 2
        and classify_pal(1130.0, get_scheme("crouter_va")) == 3
        and classify_pal(100.0, get_scheme("troiano_va")) == 0
        and classify_pal(101.0, get_scheme("troiano_va")) == 1
        and classify_pal(2019.0, get_scheme("troiano_va")) == 1
        and classify_pal(2020.0, get_scheme("troiano_va")) == 2)
    report(7, failures == 0 and boundary_ok,
           f"4 schemes x 10001 integers: {failures} mismatches; boundary "
           f"pairs exact: {boundary_ok}")


def test_criterion_08_rolling_window_row_counts():
    rng = np.random.default_rng(808)
    checked = 0
    ok = True
    for pattern in range(100):
        n_segments = int(rng.integers(1, 6))
        lengths = [int(rng.integers(1, 40)) for _ in range(n_segments)]
        ts, cursor = [], 0.0
        for length in lengths:
            for _ in range(length):
                ts.append(cursor)
                cursor += 15.0
            cursor += 45.0
        matrix = rolling_matrix(ts)
        for w in (5, 10, 15):
            out = build_rolling_windows(matrix, WindowSpec(w))
            expected = sum(max(0, n - w + 1) for n in lengths)
            ok = ok and (len(out) == expected)
            checked += 1
    report(8, ok, f"{checked} pattern/window combinations match "
                  "sum(max(0, n - w + 1))")


def test_criterion_09_end_to_end_calibration_gain():
    t0 = time.time()
    cfg = PipelineConfig(synth_participants=12, synth_rs_minutes=10.0,
                         synth_ls_minutes=(12.0, 15.0),
                         synth_is_minutes=20.0, seed=2024)
    pairs = generate_cohort(cfg.cohort_config())
    sessions = [inject_known_miscalibration(
        s, t, lambda hr, cpm, state: hr + (8.0 if state == "IS" else 0.0))
        for s, t in pairs]
    matrix = assemble_matrix(process_cohort(sessions, cfg))
    rolled = build_rolling_windows(matrix, WindowSpec(10, cfg.grid_step_s))
    folds = make_folds(sorted(set(matrix.participant.tolist())))
    spec = ModelSpec.make("svr_rbf", c=10.0, epsilon=0.1, gamma=0.01)

    wins = 0
    raw_err, cal_err = [], []
    for i, fold in enumerate(folds):
        res = evaluate_spec_on_fold(rolled, fold, spec, "ALL",
                                    list(rolled.columns), seed=900 + i,
                                    collect_test=True,
                                    raw_column="device_hr_m0")
        test = res.test
        wins += int(mae(test["pred"], test["y"]) < mae(test["raw"], test["y"]))
        raw_err.append(np.abs(test["raw"] - test["y"]))
        cal_err.append(np.abs(test["pred"] - test["y"]))
    t_res = paired_t_test(np.concatenate(raw_err), np.concatenate(cal_err))
    elapsed = time.time() - t0
    report(9, wins >= 10 and t_res.p_value < 0.05 and elapsed < 600.0,
           f"calibrated beats raw in {wins}/12 folds; paired t p={t_res.p_value:.2e}; "
           f"{elapsed:.0f}s (< 600)")


def test_criterion_10_statistics_fixtures():
    mean, se = mae_se([1.0, 2.0, 3.0])
    fixture_a = (mean == 2.0 and abs(se - 0.5774) < 1e-4)
    fixture_b = abs(error_reduction(3.26, 2.17) - 33.44) < 0.01
    rng = np.random.default_rng(1010)
    ba = bland_altman(rng.normal(size=10000), np.zeros(10000))
    fixture_c = ba.n_outside / ba.n <= 0.07
    report(10, fixture_a and fixture_b and fixture_c,
           f"mae_se=({mean}, {se:.4f}); reduction="
           f"{error_reduction(3.26, 2.17):.2f}%; outside fraction "
           f"{ba.n_outside / ba.n:.4f}")


ACCEPT_CFG = """
synth_participants = 3
synth_rs_minutes = 5
synth_ls_minutes = 5,6
synth_is_minutes = 10
states = RS,ALL
models = svr_rbf
svr_rbf_c = 10
svr_rbf_epsilon = 0.1
svr_rbf_gamma = 0.1
rolling_windows = 5
seed = 1111
"""


def test_criterion_11_run_determinism(tmp_path):
    cfg_path = tmp_path / "cfg"
    cfg_path.write_text(ACCEPT_CFG)
    outs = []
    for name in ("one", "two"):
        out = tmp_path / name
        rc = cli_main(["--config", str(cfg_path), "--out", str(out), "run"])
        assert rc == 0
        outs.append(out)
    files_a = sorted(p for p in outs[0].rglob("*") if p.is_file())
    files_b = sorted(p for p in outs[1].rglob("*") if p.is_file())
    same_names = ([p.relative_to(outs[0]) for p in files_a]
                  == [p.relative_to(outs[1]) for p in files_b])
    diffs = [fa.name for fa, fb in zip(files_a, files_b)
             if fa.read_bytes() != fb.read_bytes()]
    report(11, same_names and not diffs,
           f"{len(files_a)} artifacts byte-identical across two runs"
           + (f"; diffs: {diffs}" if diffs else ""))
