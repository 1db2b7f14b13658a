import numpy as np
import pytest

from hrcal.errors import ConvergenceError, ShapeError
from hrcal.models.kernels import KernelSpec, kernel_eval, kernel_matrix
from hrcal.models.svr import EpsilonSvr
from oracles import svr_dual_pgd


class TestKernels:
    def test_rbf_at_identical_points(self):
        spec = KernelSpec("rbf", gamma=1.0)
        assert kernel_eval(spec, [1.0, 2.0], [1.0, 2.0]) == 1.0

    def test_rbf_hand_value(self):
        spec = KernelSpec("rbf", gamma=0.1)
        assert abs(kernel_eval(spec, [0.0, 0.0], [2.0, 0.0]) -
                   np.exp(-0.4)) < 1e-12
        assert abs(np.exp(-0.4) - 0.67032) < 1e-5

    def test_poly_hand_value(self):
        spec = KernelSpec("poly", gamma=1.0, degree=2)
        assert kernel_eval(spec, [1.0, 1.0], [1.0, 1.0]) == 9.0

    def test_rbf_symmetry_and_range(self):
        rng = np.random.default_rng(0)
        spec = KernelSpec("rbf", gamma=0.5)
        for _ in range(20):
            a, b = rng.normal(size=3), rng.normal(size=3)
            k_ab = kernel_eval(spec, a, b)
            assert abs(k_ab - kernel_eval(spec, b, a)) < 1e-15
            assert 0.0 < k_ab <= 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            kernel_eval(KernelSpec("rbf", 1.0), [1.0], [1.0, 2.0])
        with pytest.raises(ShapeError):
            kernel_matrix(KernelSpec("rbf", 1.0), np.ones((3, 2)),
                          np.ones((3, 3)))


class TestSvrBasics:
    def test_constant_target_within_epsilon(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(20, 2))
        y = np.full(20, 75.0)
        for kind in ("rbf", "poly"):
            spec = KernelSpec(kind, gamma=0.5, degree=2 if kind == "poly" else None)
            model = EpsilonSvr(spec, c=10.0, epsilon=0.1).fit(X, y)
            assert np.all(np.abs(model.predict(X) - 75.0) <= 0.1 + 1e-6)

    def test_duplicated_training_set_same_predictions(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(12, 2))
        y = np.sin(X).sum(axis=1)
        spec = KernelSpec("rbf", gamma=1.0)
        a = EpsilonSvr(spec, c=100.0, epsilon=0.05, tol=1e-6).fit(X, y)
        Xd = np.vstack([X, X])
        yd = np.concatenate([y, y])
        b = EpsilonSvr(spec, c=100.0, epsilon=0.05, tol=1e-6).fit(Xd, yd)
        Xq = rng.normal(size=(15, 2))
        assert np.max(np.abs(a.predict(Xq) - b.predict(Xq))) < 1e-6

    def test_dual_feasibility_invariants(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(15, 2))
        y = X[:, 0] ** 2 + rng.normal(scale=0.1, size=15)
        model = EpsilonSvr(KernelSpec("rbf", gamma=1.0), c=5.0,
                           epsilon=0.1).fit(X, y)
        box_violation, beta_sum = model.dual_feasibility()
        assert box_violation <= 1e-12
        assert abs(beta_sum) < 1e-9

    def test_nonconvergence_carries_best_iterate(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        with pytest.raises(ConvergenceError) as err:
            EpsilonSvr(KernelSpec("rbf", gamma=1.0), c=10.0, epsilon=0.001,
                       max_iter=3).fit(X, y)
        assert err.value.model is not None
        assert err.value.model.beta is not None


class TestSvrAgainstQpOracle:
    def test_twelve_point_reference_instance(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(12, 1))
        y = np.sin(X[:, 0]) + 0.1 * rng.normal(size=12)
        spec = KernelSpec("rbf", gamma=1.0)
        model = EpsilonSvr(spec, c=10.0, epsilon=0.1, tol=1e-6).fit(X, y)
        obj, beta = svr_dual_pgd(X, y, spec, 10.0, 0.1)
        assert abs(model.dual_objective - obj) < 1e-3

    def test_random_instances_both_kernels(self):
        rng = np.random.default_rng(99)
        for trial in range(6):
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
            assert abs(model.dual_objective - obj) < 1e-3
            Xq = rng.normal(size=(8, d))
            oracle_pred = kernel_matrix(spec, Xq, X) @ beta + model.bias
            assert np.max(np.abs(model.predict(Xq) - oracle_pred)) < 1e-3
