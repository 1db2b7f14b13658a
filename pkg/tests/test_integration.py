"""Cross-stage integration paths not covered by the per-module suites."""

import numpy as np

from hrcal.cli import main
from hrcal.config import parse_config_text
from hrcal.evaluation import make_folds
from hrcal.features import assemble_matrix
from hrcal.pipeline import process_cohort, run_evaluation
from hrcal.synth import generate_cohort

BASE = """
synth_participants = 3
synth_rs_minutes = 5
synth_ls_minutes = 5,6
synth_is_minutes = 10
states = ALL
models = svr_rbf
svr_rbf_c = 10
svr_rbf_epsilon = 0.1
svr_rbf_gamma = 0.1
rolling_windows =
seed = 55
"""


def test_run_from_on_disk_cohort(tmp_path):
    cfg_path = tmp_path / "cfg"
    cfg_path.write_text(BASE)
    data = tmp_path / "data"
    assert main(["--config", str(cfg_path), "--out", str(data), "synth"]) == 0

    cfg_path.write_text(BASE + f"\ndata_dir = {data}\n")
    out = tmp_path / "out"
    assert main(["--config", str(cfg_path), "--out", str(out), "run"]) == 0
    report = (out / "eval_report.csv").read_text()
    assert "ml" in report

    # loading the same cohort twice stays deterministic
    out2 = tmp_path / "out2"
    assert main(["--config", str(cfg_path), "--out", str(out2), "run"]) == 0
    assert (out / "eval_report.csv").read_bytes() == \
        (out2 / "eval_report.csv").read_bytes()


def test_grid_spanning_all_model_families():
    cfg = parse_config_text(BASE)
    cfg = parse_config_text(BASE + """
models = svr_rbf,rf,gp,mlp,sigmoid_lr,knn
svr_rbf_gamma = 0.1
rf_n_estimators = 30
rf_max_depth = 6
gp_alpha = 0.1
mlp_learning_rate = 0.01
sigmoid_lr_c = 1.0
sigmoid_lr_penalty = l2
knn_n_neighbors = 10
knn_power = 2
""")
    sessions = [s for s, _ in generate_cohort(cfg.cohort_config())]
    matrix = assemble_matrix(process_cohort(sessions, cfg))
    result = run_evaluation(matrix, cfg)
    table = result.grid_tables["ALL"]
    families = {cell.spec.algorithm for cell in table if not cell.failed}
    assert families == {"svr_rbf", "rf", "gp", "mlp", "sigmoid_lr", "knn"}
    best = result.best_specs["ALL"]
    assert best.algorithm in families
    entry = result.report.entries[("ml", "ALL")]
    assert entry.n > 0 and np.isfinite(entry.mae)


def test_device_reported_activity_levels(tmp_path):
    cfg = parse_config_text(BASE + "pal_scheme = device\n")
    sessions = [s for s, _ in generate_cohort(cfg.cohort_config())]
    assert all(s.device_pal is not None for s in sessions)
    matrix = assemble_matrix(process_cohort(sessions, cfg))
    pal = matrix.column("pal")
    assert set(np.unique(pal)) <= {0.0, 1.0, 2.0, 3.0}
    assert len(matrix) > 0


def test_validate_from_on_disk_cohort(tmp_path):
    cfg_path = tmp_path / "cfg"
    cfg_path.write_text(BASE + "synth_extra_devices = chest:0.2\n")
    data = tmp_path / "data"
    assert main(["--config", str(cfg_path), "--out", str(data), "synth"]) == 0
    assert (data / "P01" / "device_hr_chest.csv").exists()

    cfg_path.write_text(BASE + f"data_dir = {data}\n")
    out = tmp_path / "out"
    assert main(["--config", str(cfg_path), "--out", str(out), "validate"]) == 0
    text = (out / "validation_mae.csv").read_text()
    assert "chest" in text and "wrist" in text
    assert len((out / "validation_pairwise.csv").read_text().splitlines()) > 1


def test_fusion_columns_enter_matrix_and_methods():
    cfg = parse_config_text(BASE + "fusion_pal_schemes = crouter_vm\n")
    sessions = [s for s, _ in generate_cohort(cfg.cohort_config())]
    matrix = assemble_matrix(process_cohort(sessions, cfg))
    assert "fusion_pal_crouter_vm" in matrix.columns
    result = run_evaluation(matrix, cfg)
    assert ("sf_crouter_vm", "ALL") in result.methods
    assert result.report.entries[("sf_crouter_vm", "ALL")].n > 0
