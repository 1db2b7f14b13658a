import numpy as np
import pytest

from hrcal.errors import ConfigError
from hrcal.features import ScalerStats
from hrcal.models.base import (ModelSpec, TrainedModel, load_model, make_model,
                               save_model, table_grid)
from hrcal.models.knn import KnnRegressor
from hrcal.models.sigmoid_lr import SigmoidRegressor
from oracles import knn_reference


class TestKnn:
    def test_k1_returns_nearest_label(self):
        X = np.array([[0.0], [5.0], [10.0]])
        y = np.array([1.0, 2.0, 3.0])
        model = KnnRegressor(n_neighbors=1, power=2).fit(X, y)
        assert model.predict(np.array([[4.0]]))[0] == 2.0

    def test_k_equals_n_returns_global_mean(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(12, 2))
        y = rng.normal(size=12)
        model = KnnRegressor(n_neighbors=12, power=1).fit(X, y)
        assert abs(model.predict(np.zeros((1, 2)))[0] - y.mean()) < 1e-12

    def test_minkowski_orders_differ_and_match_oracle(self):
        X = np.array([[3.0, 0.0], [2.6, 2.6], [0.1, 0.0], [0.0, 4.5]])
        y = np.array([0.0, 10.0, 20.0, 30.0])
        q = np.array([0.0, 0.0])
        preds = {}
        for p in (1, 2, 3):
            model = KnnRegressor(n_neighbors=3, power=p).fit(X, y)
            preds[p] = model.predict(q[None, :])[0]
            assert preds[p] == knn_reference(X, y, q, 3, p)
        assert preds[1] != preds[2]

    def test_tie_break_by_training_index(self):
        X = np.array([[1.0], [-1.0], [2.0]])
        y = np.array([5.0, 9.0, 1.0])
        model = KnnRegressor(n_neighbors=1, power=2).fit(X, y)
        # both first points sit at distance 1; the earlier row wins
        assert model.predict(np.array([[0.0]]))[0] == 5.0

    def test_row_permutation_invariance_off_ties(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(30, 3))
        y = rng.normal(size=30)
        perm = rng.permutation(30)
        a = KnnRegressor(n_neighbors=5, power=2).fit(X, y)
        b = KnnRegressor(n_neighbors=5, power=2).fit(X[perm], y[perm])
        Xq = rng.normal(size=(10, 3))
        assert np.allclose(a.predict(Xq), b.predict(Xq))

    def test_k_larger_than_n_rejected(self):
        with pytest.raises(ConfigError):
            KnnRegressor(n_neighbors=5).fit(np.zeros((3, 1)), np.zeros(3))


class TestSigmoidRegressor:
    def test_constant_target_reproduced(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(20, 2))
        y = np.full(20, 64.0)
        model = SigmoidRegressor(c=1.0, penalty="l2").fit(X, y)
        assert np.max(np.abs(model.predict(X) - 64.0)) < 1e-9

    def test_monotone_in_monotone_data(self):
        x = np.linspace(-2.0, 2.0, 40)[:, None]
        y = 60.0 + 20.0 * (x[:, 0] + 2.0) / 4.0
        model = SigmoidRegressor(c=10.0, penalty="l2").fit(x, y)
        preds = model.predict(np.linspace(-2.0, 2.0, 100)[:, None])
        assert np.all(np.diff(preds) >= -1e-9)

    def test_weight_norm_grows_with_c(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(60, 2))
        y = 70.0 + 8.0 * X[:, 0] - 3.0 * X[:, 1] + rng.normal(size=60)
        small = SigmoidRegressor(c=1e-3, penalty="l2").fit(X, y)
        large = SigmoidRegressor(c=100.0, penalty="l2").fit(X, y)
        assert np.linalg.norm(large.w) > np.linalg.norm(small.w)

    def test_l1_sparsifies(self):
        rng = np.random.default_rng(2)
        X = np.column_stack([rng.normal(size=80), rng.normal(size=80)])
        y = 70.0 + 10.0 * X[:, 0] + rng.normal(scale=0.1, size=80)
        model = SigmoidRegressor(c=0.01, penalty="l1").fit(X, y)
        assert abs(model.w[1]) < 1e-6

    def test_predictions_move_with_features(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(50, 1))
        y = 60.0 + 15.0 * X[:, 0]
        model = SigmoidRegressor(c=10.0, penalty="elasticnet").fit(X, y)
        mae = np.mean(np.abs(model.predict(X) - y))
        assert mae < 3.0


class TestSpecsAndSerialization:
    def test_table_grid_sizes(self):
        assert len(table_grid("gp")) == 6
        assert len(table_grid("knn")) == 30
        assert len(table_grid("mlp")) == 21
        assert len(table_grid("svr_rbf")) == 216
        assert len(table_grid("svr_poly")) == 216 * 4
        assert len(table_grid("sigmoid_lr")) == 18

    def test_grid_override_subsets(self):
        grid = table_grid("svr_rbf", {"c": (10.0,), "epsilon": (0.1,),
                                      "gamma": (0.01, 0.1)})
        assert len(grid) == 2

    def test_round_trip_serialization(self, tmp_path):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(15, 2))
        y = rng.normal(size=15) + 70.0
        spec = ModelSpec.make("knn", n_neighbors=3, power=2)
        model = make_model(spec).fit(X, y)
        scaler = ScalerStats(["a", "b"], np.zeros(2), np.ones(2),
                             np.zeros(2, dtype=bool))
        tm = TrainedModel("knn", model, ["a", "b"], scaler,
                          {"state": "ALL", "test_participant": "P01",
                           "spec": spec.label(), "seed": 1})
        save_model(tm, tmp_path / "m.json")
        loaded = load_model(tmp_path / "m.json")
        Xq = rng.normal(size=(6, 2))
        assert np.allclose(loaded.predict(Xq), model.predict(Xq))
        assert loaded.metadata["state"] == "ALL"

    def test_predict_rejects_wrong_arity(self, tmp_path):
        from hrcal.errors import ShapeError

        rng = np.random.default_rng(1)
        model = make_model(ModelSpec.make("knn", n_neighbors=2, power=1))
        model.fit(rng.normal(size=(5, 2)), np.zeros(5))
        tm = TrainedModel("knn", model, ["a", "b"])
        with pytest.raises(ShapeError):
            tm.predict(rng.normal(size=(3, 4)))
        with pytest.raises(ShapeError):
            tm.predict(rng.normal(size=(3, 2)), feature_names=["x", "b"])
