import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cellqos.data_model import Dataset
from cellqos.evaluation import (DESK_SPACE, EvalReport, EvaluationError, SearchParam, TargetBins,
                                baseline_predictions, coverage, mape, random_search, repeated_folds, report,
                                stratified_kfold)
from cellqos.regressor import TrainConfig

from conftest import make_record

unit = st.floats(0, 1)


class TestMetrics:
    def test_identity(self):
        assert mape([0.3, 0.6], [0.3, 0.6]) == 0.0
        assert coverage([0.3, 0.6], [0.3, 0.6], 0.0) == 100.0

    def test_mape_example(self):
        assert mape([0.80, 0.90], [0.82, 0.97]) == pytest.approx(4.5, abs=1e-12)

    def test_coverage_example(self):
        assert coverage([0.80, 0.90], [0.82, 0.97], 6) == 50.0

    def test_errors(self):
        with pytest.raises(EvaluationError):
            mape([], [])
        with pytest.raises(EvaluationError):
            mape([0.1], [0.1, 0.2])
        with pytest.raises(EvaluationError):
            coverage([0.1], [0.1], 101)

    @settings(max_examples=100)
    @given(st.lists(st.tuples(unit, unit), min_size=1, max_size=50), st.floats(0, 100), st.floats(0, 100))
    def test_coverage_monotone(self, pairs, a, b):
        y, p = np.array(pairs).T
        lo, hi = min(a, b), max(a, b)
        assert coverage(y, p, lo) <= coverage(y, p, hi)
        assert coverage(y, p, 100) == 100.0

    @settings(max_examples=100)
    @given(st.lists(st.tuples(unit, unit, st.integers(0, 4)), min_size=1, max_size=60))
    def test_partition_identity(self, rows):
        y, p, g = (np.array(c) for c in zip(*rows))
        g = g.astype(int)
        parts = [(np.sum(g == k), mape(y[g == k], p[g == k])) for k in np.unique(g)]
        combined = sum(n * m for n, m in parts) / len(y)
        assert abs(combined - mape(y, p)) < 1e-9

    @given(st.lists(st.tuples(unit, unit), min_size=1, max_size=30), st.randoms(use_true_random=False))
    def test_permutation_invariant(self, pairs, rnd):
        shuffled = list(pairs)
        rnd.shuffle(shuffled)
        y, p = np.array(pairs).T
        ys, ps = np.array(shuffled).T
        assert mape(ys, ps) == pytest.approx(mape(y, p), abs=1e-9)
        assert coverage(ys, ps) == coverage(y, p)


class TestBins:
    def test_labels(self):
        assert TargetBins().labels() == ["[0,0.5]", "(0.5,0.7]", "(0.7,0.8]", "(0.8,0.9]", "(0.9,1]"]

    def test_edges_closed_right(self):
        assert list(TargetBins().assign([0.0, 0.5, 0.500001, 0.7, 0.9, 0.95, 1.0])) == [0, 0, 1, 1, 3, 4, 4]

    def test_bad_edges(self):
        with pytest.raises(EvaluationError):
            TargetBins((0.0, 0.5, 0.5, 1.0))


class TestFolds:
    def test_uniform_seventy(self):
        bins = TargetBins()
        t = np.repeat([0.25, 0.6, 0.75, 0.85, 0.95], 14)
        folds = stratified_kfold(t, 7, bins, seed=3)
        for f in range(7):
            assert np.sum(folds == f) == 10
            assert np.bincount(bins.assign(t[folds == f]), minlength=5).tolist() == [2] * 5

    def test_two_in_one_bin(self):
        assert sorted(stratified_kfold([0.1, 0.2], 2)) == [0, 1]

    def test_deterministic(self):
        t = np.random.default_rng(0).uniform(size=100)
        assert np.array_equal(stratified_kfold(t, 5, seed=9), stratified_kfold(t, 5, seed=9))

    def test_small_bin_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            folds = stratified_kfold([0.1] * 20 + [0.95] * 3, 7)
        assert "has 3 members" in caplog.text
        assert folds.min() >= 0 and folds.max() < 7

    @settings(max_examples=50, deadline=None)
    @given(st.lists(unit, min_size=2, max_size=200), st.integers(2, 9), st.integers(0, 100))
    def test_balance(self, targets, k, seed):
        bins = TargetBins()
        t = np.array(targets)
        folds = stratified_kfold(t, k, bins, seed)
        b = bins.assign(t)
        for j in range(bins.n_bins):
            sizes = np.bincount(folds[b == j], minlength=k)
            assert sizes.max() - sizes.min() <= 1
        sizes = np.bincount(folds, minlength=k)
        assert sizes.max() - sizes.min() <= 1

    def test_repeats_differ(self):
        t = np.random.default_rng(0).uniform(size=50)
        a, b = repeated_folds(t, 5, 2)
        assert not np.array_equal(a, b)
        with pytest.raises(EvaluationError):
            repeated_folds(t, 5, 0)

    def test_k_too_small(self):
        with pytest.raises(EvaluationError):
            stratified_kfold([0.1, 0.2], 1)


def search_data(n=200):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(n, 4))
    y = 1 / (1 + np.exp(-X[:, 0])) * 0.8 + 0.1 * rng.uniform(size=n)
    return X, y


SMALL_SPACE = (SearchParam("n_estimators", 5, 40, integer=True),
               SearchParam("learning_rate", 0.01, 0.5, log=True),
               SearchParam("depth", 1, 4, integer=True),
               SearchParam("objective", choices=("squared_error", "huber")))


class TestSearch:
    def test_param_sampling(self):
        rng = np.random.default_rng(0)
        for p in DESK_SPACE:
            for _ in range(50):
                v = p.sample(rng)
                if p.choices:
                    assert v in p.choices
                else:
                    assert p.low <= v <= p.high
                    assert isinstance(v, int) == p.integer

    def test_single_trial(self):
        X, y = search_data()
        res = random_search(SMALL_SPACE, 1, X[:150], y[:150], validation=(X[150:], y[150:]))
        assert res.best_trial is res.trials[0]
        assert res.best_config.n_estimators == res.trials[0].params["n_estimators"]

    def test_seeded_sequence(self):
        X, y = search_data()
        kw = dict(validation=(X[150:], y[150:]), seed=4)
        a = random_search(SMALL_SPACE, 3, X[:150], y[:150], **kw)
        b = random_search(SMALL_SPACE, 3, X[:150], y[:150], threads=3, **kw)
        assert [t.to_line() for t in a.trials] == [t.to_line() for t in b.trials]

    def test_best_below_median(self, tmp_path):
        X, y = search_data(140)
        folds = repeated_folds(y, 3, 1)
        res = random_search(SMALL_SPACE, 20, X, y, fold_sets=folds, base=TrainConfig(seed=1), threads=4)
        assert res.best_trial.score <= np.median([t.score for t in res.trials])
        assert all(len(t.scores) == 3 for t in res.trials)
        res.write_log(tmp_path / "trials.jsonl")
        lines = (tmp_path / "trials.jsonl").read_text().splitlines()
        assert len(lines) == 20 and json.loads(lines[0])["trial"] == 0

    def test_errors(self):
        X, y = search_data()
        with pytest.raises(EvaluationError):
            random_search(SMALL_SPACE, 0, X, y, validation=(X, y))
        with pytest.raises(EvaluationError):
            random_search(SMALL_SPACE, 1, X, y)


def dataset(cities=("c1",), per=6, splits=None):
    recs = []
    for city in cities:
        for i in range(per):
            recs.append(make_record(cell_name=f"{city}_{i}", site_id=f"{city}s{i}", city=city))
    splits = splits or {(c, "opA"): "test" for c in cities}
    return Dataset(tuple(recs), splits)


class TestReport:
    def test_single_city(self):
        ds = dataset()
        y = {r.cell_name: 0.1 * (i + 3) for i, r in enumerate(ds.records)}
        p = {k: v + 0.02 for k, v in y.items()}
        rep = report(ds, y, p)
        a, b = rep.row("combined_test"), rep.row("test:c1/opA")
        assert (a.instances, a.mape, a.p_theta) == (b.instances, b.mape, b.p_theta)

    def test_bin_counts_sum(self):
        ds = dataset(("c1", "c2"), 20, {("c1", "opA"): "train", ("c2", "opA"): "test"})
        rng = np.random.default_rng(0)
        y = {r.cell_name: float(rng.uniform()) for r in ds.records}
        p = {k: float(rng.uniform()) for k in y}
        rep = report(ds, y, p)
        for split in ("train", "test"):
            total = sum(r.instances for r in rep.rows if r.scope.startswith(f"{split}:bin"))
            assert total == rep.row(f"combined_{split}").instances == 20

    def test_perfect(self):
        ds = dataset(("c1", "c2"), 10)
        y = {r.cell_name: (i % 10) / 10 for i, r in enumerate(ds.records)}
        rep = report(ds, y, dict(y))
        assert all(r.mape == 0.0 and r.p_theta == 100.0 for r in rep.rows)

    def test_empty_scope_noted(self):
        ds = dataset()
        y = {r.cell_name: 0.95 for r in ds.records}
        rep = report(ds, y, dict(y))
        assert "test:bin[0,0.5]: no instances" in rep.notes
        assert "test:bin(0.9,1]" in rep.scopes()

    def test_round_trip(self, tmp_path):
        ds = dataset(("c1", "c2"), 10)
        y = {r.cell_name: (i % 10) / 10 for i, r in enumerate(ds.records)}
        p = {k: min(1.0, v + 0.033) for k, v in y.items()}
        rep = report(ds, y, p)
        rep.write(tmp_path / "r.csv")
        back = EvalReport.read(tmp_path / "r.csv")
        assert back.rows == rep.rows and back.notes == rep.notes

    def test_baseline(self):
        base = baseline_predictions([0.0, 1.0], [1.0, 3.0], ["a", "b"])
        assert base == {"a": 0.75, "b": 0.75}
