"""Error metrics, stratified folds, random hyperparameter search and scoped reports.

Targets and predictions live on [0, 1]; errors are reported on the 0-100
scale, so an absolute error of 0.05 counts as 5 points.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data_model import Dataset
from .regressor import TrainConfig, fit

logger = logging.getLogger(__name__)

DEFAULT_THETA = 6.0
DEFAULT_EDGES = (0.0, 0.5, 0.7, 0.8, 0.9, 1.0)
SPLIT_ORDER = ("train", "test")


class EvaluationError(ValueError):
    pass


def _abs_errors(y, y_hat) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape or y.ndim != 1:
        raise EvaluationError("y and y_hat must be 1-D and of equal length")
    if y.size == 0:
        raise EvaluationError("empty input")
    return np.abs(100.0 * y - 100.0 * y_hat)


def mape(y, y_hat) -> float:
    """Mean absolute error with both sides scaled to percentages."""
    return float(np.mean(_abs_errors(y, y_hat)))


def coverage(y, y_hat, theta: float = DEFAULT_THETA) -> float:
    """Percentage of samples whose percentage-scale absolute error is at most ``theta``."""
    if not 0.0 <= theta <= 100.0:
        raise EvaluationError("theta must lie in [0, 100]")
    return float(100.0 * np.mean(_abs_errors(y, y_hat) <= theta))


@dataclass(frozen=True)
class TargetBins:
    """Left-closed first bin, then half-open ``(lo, hi]`` bins."""

    edges: tuple[float, ...] = DEFAULT_EDGES

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        if e.size < 2 or np.any(np.diff(e) <= 0):
            raise EvaluationError("bin edges must be strictly increasing with at least two values")

    @property
    def n_bins(self) -> int:
        return len(self.edges) - 1

    def assign(self, targets) -> np.ndarray:
        t = np.asarray(targets, dtype=float)
        return np.searchsorted(np.asarray(self.edges[1:-1]), t, side="left")

    def labels(self) -> list[str]:
        e = self.edges
        out = [f"[{e[0]:g},{e[1]:g}]"]
        out += [f"({lo:g},{hi:g}]" for lo, hi in zip(e[1:-1], e[2:])]
        return out


# ---------------------------------------------------------------------------
# folds

def stratified_kfold(targets, k: int = 7, bins: TargetBins = TargetBins(), seed: int = 0) -> np.ndarray:
    """Fold id per sample.

    Within each target bin, members are shuffled and dealt to folds in turn.
    The dealing position carries over from one bin to the next, so overall
    fold sizes also stay within one of each other.
    """
    if k < 2:
        raise EvaluationError("k must be at least 2")
    t = np.asarray(targets, dtype=float)
    rng = np.random.default_rng(seed)
    folds = np.empty(t.size, dtype=np.int64)
    b = bins.assign(t)
    offset = 0
    for j in range(bins.n_bins):
        members = np.nonzero(b == j)[0]
        if members.size == 0:
            continue
        if members.size < k:
            logger.warning("target bin %s has %d members for %d folds; dealing round-robin",
                           bins.labels()[j], members.size, k)
        members = members[rng.permutation(members.size)]
        folds[members] = (offset + np.arange(members.size)) % k
        offset = (offset + members.size) % k
    return folds


def repeated_folds(targets, k: int = 7, repeats: int = 1, bins: TargetBins = TargetBins(),
                   seed: int = 0) -> list[np.ndarray]:
    """Independent stratified fold assignments, one per repetition."""
    if repeats < 1:
        raise EvaluationError("repeats must be at least 1")
    seeds = np.random.SeedSequence(seed).generate_state(repeats)
    return [stratified_kfold(targets, k, bins, int(s)) for s in seeds]


# ---------------------------------------------------------------------------
# search

@dataclass(frozen=True)
class SearchParam:
    name: str
    low: float = 0.0
    high: float = 1.0
    log: bool = False
    integer: bool = False
    choices: tuple | None = None

    def sample(self, rng: np.random.Generator):
        if self.choices is not None:
            return self.choices[int(rng.integers(len(self.choices)))]
        if self.log:
            v = math.exp(rng.uniform(math.log(self.low), math.log(self.high)))
        else:
            v = rng.uniform(self.low, self.high)
        if self.integer:
            return int(min(max(round(v), self.low), self.high))
        return float(v)


# Ranges of the reference study for the knobs this regressor supports.
REFERENCE_SPACE = (
    SearchParam("n_estimators", 250, 3000, integer=True),
    SearchParam("learning_rate", 1e-4, 1.0, log=True),
    SearchParam("l2_leaf_reg", 0.0, 10.0),
    SearchParam("colsample_bylevel", 0.01, 1.0, log=True),
    SearchParam("subsample", 0.1, 1.0, log=True),
    SearchParam("depth", 4, 10, integer=True),
    SearchParam("objective", choices=("squared_error", "huber")),
)

# Narrower ranges that fit a laptop budget.
DESK_SPACE = (
    SearchParam("n_estimators", 50, 300, integer=True),
    SearchParam("learning_rate", 0.03, 0.3, log=True),
    SearchParam("l2_leaf_reg", 0.0, 10.0),
    SearchParam("colsample_bylevel", 0.3, 1.0, log=True),
    SearchParam("subsample", 0.5, 1.0, log=True),
    SearchParam("depth", 3, 7, integer=True),
    SearchParam("objective", choices=("squared_error", "huber")),
)


@dataclass
class Trial:
    index: int
    params: dict
    scores: list[float]

    @property
    def score(self) -> float:
        return float(np.mean(self.scores))

    def to_line(self) -> str:
        return json.dumps({"trial": self.index, "params": self.params, "scores": self.scores,
                           "mean_mape": self.score}, sort_keys=True)


@dataclass
class SearchResult:
    best_config: TrainConfig
    best_trial: Trial
    trials: list[Trial] = field(default_factory=list)

    def write_log(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            for t in self.trials:
                fh.write(t.to_line() + "\n")


def cross_val_scores(X, y, weights, config: TrainConfig, fold_sets: Sequence[np.ndarray]) -> list[float]:
    """Held-out MAPE for every fold of every repetition."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones(y.size) if weights is None else np.asarray(weights, dtype=float)
    scores = []
    for folds in fold_sets:
        for f in np.unique(folds):
            test = folds == f
            model = fit(X[~test], y[~test], w[~test], config)
            scores.append(mape(y[test], model.predict(X[test])))
    return scores


def random_search(space: Sequence[SearchParam], trials: int, X, y, weights=None, *,
                  fold_sets: Sequence[np.ndarray] | None = None, validation=None,
                  base: TrainConfig = TrainConfig(), seed: int = 0, threads: int = 1) -> SearchResult:
    """Sample ``trials`` configurations and keep the one with the lowest mean validation MAPE.

    Scores come from cross-validation over ``fold_sets`` or, if given, from a
    single ``(X_valid, y_valid)`` hold-out. Ties keep the earlier trial.
    """
    if trials < 1:
        raise EvaluationError("trials must be at least 1")
    if (fold_sets is None) == (validation is None):
        raise EvaluationError("pass exactly one of fold_sets or validation")
    rng = np.random.default_rng(seed)
    sampled = [{p.name: p.sample(rng) for p in space} for _ in range(trials)]
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)

    def run(i: int) -> Trial:
        config = base.replace(**sampled[i])
        if validation is not None:
            model = fit(X, y, weights, config)
            scores = [mape(validation[1], model.predict(np.asarray(validation[0], dtype=float)))]
        else:
            scores = cross_val_scores(X, y, weights, config, fold_sets)
        logger.info("trial %d: mean MAPE %.4f", i, float(np.mean(scores)))
        return Trial(i, sampled[i], scores)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            log = list(pool.map(run, range(trials)))
    else:
        log = [run(i) for i in range(trials)]
    best = min(log, key=lambda t: (t.score, t.index))
    return SearchResult(base.replace(**best.params), best, log)


# ---------------------------------------------------------------------------
# reports

@dataclass(frozen=True)
class ReportRow:
    scope: str
    instances: int
    mape: float
    p_theta: float


@dataclass
class EvalReport:
    theta: float
    rows: list[ReportRow] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def row(self, scope: str) -> ReportRow:
        for r in self.rows:
            if r.scope == scope:
                return r
        raise KeyError(scope)

    def scopes(self) -> list[str]:
        return [r.scope for r in self.rows]

    def to_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scope", "instances", "mape", "p_theta"])
        for r in self.rows:
            w.writerow([r.scope, r.instances, repr(r.mape), repr(r.p_theta)])
        for n in self.notes:
            buf.write(f"# {n}\n")
        return buf.getvalue()

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_text())

    @classmethod
    def read(cls, path, theta: float = DEFAULT_THETA) -> "EvalReport":
        rows, notes = [], []
        with open(path, encoding="utf-8", newline="") as fh:
            body = []
            for line in fh:
                if line.startswith("# "):
                    notes.append(line[2:].rstrip("\n"))
                else:
                    body.append(line)
        for r in csv.DictReader(body):
            rows.append(ReportRow(r["scope"], int(r["instances"]), float(r["mape"]), float(r["p_theta"])))
        return cls(theta, rows, notes)


def report(dataset: Dataset, targets: Mapping[str, float], predictions: Mapping[str, float],
           theta: float = DEFAULT_THETA, bins: TargetBins = TargetBins()) -> EvalReport:
    """Scores per split, per city-operator and per (split, target bin).

    Only records that have both a target and a prediction are scored.
    Scopes left with no instances are omitted and listed in ``notes``.
    """
    out = EvalReport(theta)
    scored = [r for r in dataset.records if r.cell_name in targets and r.cell_name in predictions]
    splits = {r.cell_name: dataset.split_of(r) for r in scored}
    present = sorted({s for s in splits.values() if s is not None},
                     key=lambda s: (SPLIT_ORDER.index(s) if s in SPLIT_ORDER else len(SPLIT_ORDER), s))
    if not present:
        out.notes.append("no records with a split, target and prediction")
        return out

    def add(scope: str, names: list[str]) -> None:
        if not names:
            out.notes.append(f"{scope}: no instances")
            return
        y = np.array([targets[n] for n in names], dtype=float)
        p = np.array([predictions[n] for n in names], dtype=float)
        out.rows.append(ReportRow(scope, len(names), mape(y, p), coverage(y, p, theta)))

    for split in present:
        add(f"combined_{split}", [r.cell_name for r in scored if splits[r.cell_name] == split])
    for key in sorted(dataset.splits):
        split = dataset.splits[key]
        if split not in present:
            continue
        city, operator = key
        add(f"{split}:{city}/{operator}",
            [r.cell_name for r in scored if r.city_operator == key and splits[r.cell_name] == split])
    labels = bins.labels()
    for split in present:
        names = [r.cell_name for r in scored if splits[r.cell_name] == split]
        b = bins.assign([targets[n] for n in names])
        for j, label in enumerate(labels):
            add(f"{split}:bin{label}", [n for n, bj in zip(names, b) if bj == j])
    return out


def baseline_predictions(train_y, weights, names: Sequence[str]) -> dict[str, float]:
    """Predict the (weighted) training mean everywhere."""
    y = np.asarray(train_y, dtype=float)
    w = np.ones(y.size) if weights is None else np.asarray(weights, dtype=float)
    m = float(np.sum(w * y) / np.sum(w))
    return {n: m for n in names}
