import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cellqos.features import MISSING, NUMERIC, FeatureMatrix
from cellqos.regressor import (ALL_LEFT, BinMapper, Ensemble, ModelError, TrainConfig, feature_importance, fit,
                               huber_loss, huber_pseudo_gradient, predict, weighted_loss)


def toy(n=400, p=5, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = 0.5 + 0.2 * np.tanh(X[:, 0]) - 0.1 * (X[:, 1] > 0) + 0.02 * rng.normal(size=n)
    return X, y


class TestHuber:
    @pytest.mark.parametrize("r, g", [(0.5, 0.5), (3.0, 1.0), (-3.0, -1.0), (-0.5, -0.5)])
    def test_examples(self, r, g):
        assert huber_pseudo_gradient(r) == g

    @pytest.mark.parametrize("r", [-3.0, -1.0, -0.5, 0.5, 1.0, 3.0])
    def test_finite_differences(self, r):
        # d loss(y - F) / dF = -pseudo-gradient
        eps = 1e-6
        fd = (huber_loss(r + eps) - huber_loss(r - eps)) / (2 * eps)
        assert abs(fd - huber_pseudo_gradient(r)) < 1e-6

    def test_continuity_at_delta(self):
        assert huber_loss(2.0, 2.0) == pytest.approx(2.0)
        assert huber_loss(2.0 + 1e-12, 2.0) == pytest.approx(2.0)


class TestConfig:
    @pytest.mark.parametrize("kw", [{"depth": 0}, {"learning_rate": 0}, {"subsample": 0}, {"objective": "l1"},
                                    {"max_bins": 300}, {"early_stopping_rounds": 0}, {"l2_leaf_reg": -1}])
    def test_invalid(self, kw):
        with pytest.raises(ModelError):
            TrainConfig(**kw)

    def test_replace(self):
        c = TrainConfig().replace(depth=3)
        assert c.depth == 3 and c.n_estimators == TrainConfig().n_estimators


class TestFit:
    def test_constant_target(self):
        X, _ = toy()
        y = np.full(len(X), 0.3717)
        for obj in ("squared_error", "huber"):
            ens = fit(X, y, config=TrainConfig(n_estimators=5, objective=obj))
            assert np.all(ens.predict(X) == 0.3717)

    def test_step_function(self):
        x = np.linspace(-1, 1, 200)
        y = (x >= 0).astype(float)
        cfg = TrainConfig(n_estimators=1, depth=1, learning_rate=1.0, l2_leaf_reg=0.0)
        ens = fit(x[:, None], y, config=cfg)
        assert np.mean((ens.predict(x[:, None]) - y) ** 2) < 1e-24
        assert ens.trees[0].feature[0] == 0

    def test_loss_non_increasing(self):
        X, y = toy(300)
        ens = fit(X, y, config=TrainConfig(n_estimators=500, depth=3))
        assert np.all(np.diff(ens.train_trace) <= 1e-15)

    def test_huber_loss_non_increasing(self):
        X, y = toy(300)
        y = y + np.where(np.arange(len(y)) % 17 == 0, 3.0, 0.0)
        cfg = TrainConfig(n_estimators=100, depth=3, objective="huber", huber_delta=0.1)
        assert np.all(np.diff(fit(X, y, config=cfg).train_trace) <= 1e-15)

    def test_trace_matches_predictions(self):
        X, y = toy()
        w = np.random.default_rng(1).uniform(0.5, 2, len(y))
        ens = fit(X, y, w, TrainConfig(n_estimators=20))
        assert abs(ens.train_trace[-1] - weighted_loss(y, ens.predict(X), w)) < 1e-9

    def test_deterministic(self):
        X, y = toy()
        cfg = TrainConfig(n_estimators=15, subsample=0.7, colsample_bylevel=0.5, seed=3)
        assert fit(X, y, config=cfg).to_dict() == fit(X, y, config=cfg).to_dict()

    def test_subsampling_trace_finite(self):
        X, y = toy()
        cfg = TrainConfig(n_estimators=15, subsample=0.5, colsample_bylevel=0.4)
        ens = fit(X, y, config=cfg, validation=(X[:50], y[:50]))
        assert np.all(np.isfinite(ens.train_trace)) and len(ens.valid_trace) == 15

    def test_duplicate_equals_double_weight(self):
        rng = np.random.default_rng(5)
        X = rng.integers(0, 20, size=(150, 3)).astype(float)
        y = rng.uniform(size=150)
        dup = np.arange(0, 150, 3)
        w = np.ones(150)
        w[dup] = 2.0
        cfg = TrainConfig(n_estimators=30, depth=3)
        a = fit(X, y, w, cfg)
        b = fit(np.vstack([X, X[dup]]), np.concatenate([y, y[dup]]), None, cfg)
        for ta, tb in zip(a.trees, b.trees):
            assert np.array_equal(ta.feature, tb.feature)
            assert np.array_equal(ta.threshold, tb.threshold)
            assert np.allclose(ta.value, tb.value, rtol=0, atol=1e-12)
        assert np.allclose(a.predict(X), b.predict(X), rtol=0, atol=1e-9)

    def test_early_stopping(self):
        X, y = toy(300)
        Xv, yv = toy(200, seed=9)
        cfg = TrainConfig(n_estimators=300, learning_rate=0.5, early_stopping_rounds=5)
        ens = fit(X, y, config=cfg, validation=(Xv, yv))
        assert ens.n_trees == ens.best_iteration + 1 < 300
        assert ens.valid_trace[-1] == min(ens.valid_trace)

    def test_one_minus(self):
        X, y = toy()
        ens = fit(X, y, config=TrainConfig(n_estimators=10, one_minus_target=True))
        assert np.allclose(ens.predict(X), 1.0 - ens.predict_transformed(X))
        plain = fit(X, y, config=TrainConfig(n_estimators=10))
        assert np.allclose(ens.predict(X), plain.predict(X), atol=1e-9)

    def test_zero_trees(self):
        X, y = toy()
        ens = fit(X, y, config=TrainConfig(n_estimators=0))
        assert np.all(ens.predict(X) == np.mean(y))
        assert feature_importance(ens) == {}

    def test_rejects_bad_input(self):
        X, y = toy(20)
        with pytest.raises(ModelError):
            fit(X, y[:-1])
        with pytest.raises(ModelError):
            fit(X, np.where(np.arange(20) == 3, np.nan, y))
        with pytest.raises(ModelError):
            fit(X, y, -np.ones(20))


class TestMissing:
    def test_missing_routed_by_learned_direction(self):
        x = np.array([0.0] * 50 + [1.0] * 50 + [MISSING] * 50)
        y = np.array([0.0] * 50 + [1.0] * 100)
        ens = fit(x[:, None], y, config=TrainConfig(n_estimators=1, depth=1, learning_rate=1.0, l2_leaf_reg=0.0))
        assert np.allclose(ens.predict(np.array([[MISSING], [np.nan], [0.0]])), [1.0, 1.0, 0.0])

    def test_all_left_threshold(self):
        # a split that separates only missing from present values puts every value left
        x = np.array([1.0] * 50 + [MISSING] * 50)
        y = np.array([0.0] * 50 + [1.0] * 50)
        ens = fit(x[:, None], y, config=TrainConfig(n_estimators=1, depth=1, learning_rate=1.0, l2_leaf_reg=0.0))
        assert ens.trees[0].threshold[0] == ALL_LEFT
        assert np.allclose(ens.predict(np.array([[5e6], [MISSING]])), [0.0, 1.0])


class TestImportance:
    def test_single_feature(self):
        x = np.linspace(0, 1, 100)[:, None]
        assert feature_importance(fit(x, x[:, 0] ** 2, config=TrainConfig(n_estimators=5))) == {"f0": 1.0}

    def test_duplicate_columns(self):
        X, y = toy()
        single = feature_importance(fit(X, y, config=TrainConfig(n_estimators=20)))
        dup = feature_importance(fit(np.column_stack([X[:, :1], X]), y, config=TrainConfig(n_estimators=20)))
        assert "f1" not in dup
        assert dup["f0"] == pytest.approx(single["f0"], abs=1e-9)

    def test_sums_to_one(self):
        X, y = toy()
        assert sum(feature_importance(fit(X, y, config=TrainConfig(n_estimators=10))).values()) == pytest.approx(1.0)


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        X, y = toy()
        ens = fit(X, y, config=TrainConfig(n_estimators=25))
        ens.save(tmp_path / "m.json")
        back = Ensemble.load(tmp_path / "m.json")
        assert np.array_equal(back.predict(X), ens.predict(X))
        back.save(tmp_path / "m2.json")
        assert (tmp_path / "m.json").read_bytes() == (tmp_path / "m2.json").read_bytes()

    def test_bad_format(self):
        with pytest.raises(ModelError):
            Ensemble.from_dict({"format": "other"})

    def test_manifest_mismatch(self):
        names = ["a", "b"]
        fm = FeatureMatrix(names, [NUMERIC] * 2, ["k0", "k1"], np.array([[0.0, 1.0], [1.0, 0.0]]))
        ens = fit(fm, [0.0, 1.0], config=TrainConfig(n_estimators=2))
        swapped = FeatureMatrix(names[::-1], [NUMERIC] * 2, ["k0", "k1"], fm.data)
        with pytest.raises(ModelError):
            predict(ens, swapped)
        with pytest.raises(ModelError):
            predict(ens, np.zeros((2, 3)))


class TestBinMapper:
    def test_codes_respect_order(self):
        X = np.array([[3.0], [1.0], [MISSING], [2.0]])
        codes = BinMapper.fit(X, np.ones(4)).transform(X)[:, 0]
        assert list(codes) == [3, 1, 0, 2]

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=300, max_size=600))
    def test_max_bins_respected(self, values):
        X = np.array(values)[:, None]
        m = BinMapper.fit(X, np.ones(len(values)), max_bins=16)
        assert m.cuts[0].size <= 16
        assert np.all(np.diff(m.cuts[0]) > 0)
