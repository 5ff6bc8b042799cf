import numpy as np
import pytest

from greedvmaf.svr import (
    Hyperparams,
    default_grid,
    grid_search,
    load_model,
    model_from_dict,
    model_to_dict,
    predict,
    save_model,
    train_svr,
)


@pytest.fixture
def linear_data():
    rng = np.random.default_rng(80)
    X = rng.normal(size=(80, 21))
    return X, 2.0 * X[:, 0] + 1.0


class TestTraining:
    def test_exact_linear_recovery(self, linear_data):
        X, y = linear_data
        model = train_svr(X, y, kernel="linear", hp=Hyperparams(C=100.0, epsilon=0.01))
        rmse = np.sqrt(np.mean((predict(model, X) - y) ** 2))
        assert rmse < 0.02

    def test_training_points_within_tube(self, linear_data):
        X, y = linear_data
        eps = 0.05
        model = train_svr(X, y, kernel="linear", hp=Hyperparams(C=1000.0, epsilon=eps))
        assert np.max(np.abs(predict(model, X) - y)) <= eps + 0.02

    def test_constant_target(self, linear_data):
        X, _ = linear_data
        with pytest.warns(UserWarning, match="constant"):
            model = train_svr(X, np.full(X.shape[0], 5.0))
        np.testing.assert_allclose(predict(model, X), 5.0)

    def test_rbf_beats_linear_on_nonlinear_target(self, linear_data):
        X, _ = linear_data
        y = np.sin(2.0 * X[:, 0]) * np.cos(2.0 * X[:, 1])
        hp = Hyperparams(C=10.0, epsilon=0.01, gamma=0.5)
        rmse_lin = np.sqrt(
            np.mean((predict(train_svr(X, y, "linear", hp), X) - y) ** 2)
        )
        rmse_rbf = np.sqrt(np.mean((predict(train_svr(X, y, "rbf", hp), X) - y) ** 2))
        assert rmse_rbf < rmse_lin

    def test_deterministic(self, linear_data):
        X, y = linear_data
        a = train_svr(X, y, kernel="linear")
        b = train_svr(X, y, kernel="linear")
        np.testing.assert_array_equal(a.coefficients, b.coefficients)
        assert a.bias == b.bias

    def test_zero_variance_feature_gets_zero_weight(self, linear_data):
        X, y = linear_data
        X = X.copy()
        X[:, 7] = 42.0
        model = train_svr(X, y, kernel="linear", hp=Hyperparams(C=10.0))
        assert model.std[7] == 1.0
        assert model.coefficients[7] == 0.0

    def test_input_validation(self, linear_data):
        X, y = linear_data
        with pytest.raises(ValueError, match="2 training rows"):
            train_svr(X[:1], y[:1])
        with pytest.raises(ValueError, match="non-finite"):
            bad = X.copy()
            bad[0, 0] = np.nan
            train_svr(bad, y)


class TestPredict:
    def test_prediction_near_label_on_training_point(self, linear_data):
        X, y = linear_data
        eps = 0.01
        model = train_svr(X, y, kernel="linear", hp=Hyperparams(C=100.0, epsilon=eps))
        assert abs(predict(model, X[:1])[0] - y[0]) <= eps + 0.02

    def test_affine_rescaling_invariance(self, linear_data):
        # scaling a raw column consistently at train and predict time is a
        # no-op because standardisation absorbs it
        X, y = linear_data
        base = predict(train_svr(X, y, kernel="linear"), X)
        X2 = X.copy()
        X2[:, 0] = 3.0 * X2[:, 0] - 10.0
        rescaled = predict(train_svr(X2, y, kernel="linear"), X2)
        np.testing.assert_allclose(rescaled, base, atol=1e-8)

    def test_feature_permutation_consistency(self, linear_data):
        X, y = linear_data
        names = tuple(f"n{i}" for i in range(X.shape[1]))
        model = train_svr(X, y, kernel="rbf", feature_names=names)
        perm = np.random.default_rng(81).permutation(X.shape[1])
        model_p = train_svr(
            X[:, perm], y, kernel="rbf", feature_names=tuple(names[i] for i in perm)
        )
        np.testing.assert_allclose(
            predict(model_p, X[:, perm]), predict(model, X), atol=1e-9
        )

    def test_empty_input(self, linear_data):
        X, y = linear_data
        model = train_svr(X, y)
        assert predict(model, np.zeros((0, 21))).size == 0

    def test_dimension_mismatch(self, linear_data):
        X, y = linear_data
        model = train_svr(X, y)
        with pytest.raises(ValueError, match="feature columns"):
            predict(model, X[:, :5])

    def test_gamma_to_zero_degenerates_to_constant(self, linear_data):
        X, y = linear_data
        spreads = []
        for gamma in (0.1, 0.01, 0.001, 1e-4, 1e-5):
            model = train_svr(
                X, y, kernel="rbf", hp=Hyperparams(C=1.0, epsilon=0.1, gamma=gamma)
            )
            spreads.append(float(np.var(predict(model, X))))
        assert all(b <= a + 1e-12 for a, b in zip(spreads, spreads[1:]))


class TestSolverPaths:
    def test_numpy_fallback_matches_fast_path(self, linear_data):
        from greedvmaf.svr import _smo_loop_fast, _smo_loop_numpy

        X, y = linear_data
        Xs = (X - X.mean(0)) / X.std(0)
        for C, eps in ((1.0, 0.1), (100.0, 0.01)):
            K = np.ascontiguousarray(Xs @ Xs.T)
            beta_a, grad_a, conv_a = _smo_loop_fast(K, y, C, eps, 1e-3, 100_000)
            beta_b, grad_b, conv_b = _smo_loop_numpy(K, y, C, eps, 1e-3, 100_000)
            np.testing.assert_array_equal(beta_a, beta_b)
            np.testing.assert_array_equal(grad_a, grad_b)
            assert conv_a == conv_b


class TestGridSearch:
    def test_single_point(self, linear_data):
        X, y = linear_data
        only = Hyperparams(C=3.0, epsilon=0.2)
        assert grid_search((X, y), (X[:10], y[:10]), grid=[only]) == only

    def test_sufficient_c_ties_break_to_smallest(self, linear_data):
        X, y = linear_data
        hp = grid_search((X, y), (X[:20], y[:20]), kernel="linear")
        grid = default_grid("linear")
        assert hp.C == min(g.C for g in grid)

    def test_validation_too_small(self, linear_data):
        X, y = linear_data
        with pytest.raises(ValueError, match="at least 2"):
            grid_search((X, y), (X[:1], y[:1]))

    def test_empty_grid(self, linear_data):
        X, y = linear_data
        with pytest.raises(ValueError, match="empty"):
            grid_search((X, y), (X[:10], y[:10]), grid=[])


class TestPersistence:
    def test_json_round_trip_linear(self, linear_data, tmp_path):
        X, y = linear_data
        model = train_svr(X, y, kernel="linear", hp=Hyperparams(C=100.0, epsilon=0.01))
        save_model(model, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        np.testing.assert_allclose(predict(back, X), predict(model, X), atol=1e-9)
        assert back.feature_names == model.feature_names

    def test_json_round_trip_rbf(self, linear_data, tmp_path):
        X, y = linear_data
        model = train_svr(
            X, y, kernel="rbf", hp=Hyperparams(C=10.0, epsilon=0.1, gamma=0.25)
        )
        save_model(model, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        np.testing.assert_allclose(predict(back, X), predict(model, X), atol=1e-9)

    def test_version_check(self, linear_data):
        X, y = linear_data
        doc = model_to_dict(train_svr(X, y))
        doc["version"] = 99
        with pytest.raises(ValueError, match="version"):
            model_from_dict(doc)
