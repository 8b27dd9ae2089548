"""A small, deterministic gradient-boosted regression tree learner.

Trees are grown level by level on quantile-binned features using weighted
first and second order statistics (Newton leaves with L2 shrinkage). Each
node learns a default direction for missing values. Row subsampling happens
per boosting iteration and column subsampling per tree level.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from .features import CATEGORICAL, MISSING, FeatureMatrix

FORMAT_NAME = "cellqos-gbdt"
FORMAT_VERSION = 1

HESSIAN_FLOOR = 1e-6
MIN_SPLIT_GAIN = 1e-12
OBJECTIVES = ("squared_error", "huber")
ALL_LEFT = float(np.finfo(float).max)


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    n_estimators: int = 300
    learning_rate: float = 0.1
    depth: int = 6
    l2_leaf_reg: float = 3.0
    colsample_bylevel: float = 1.0
    subsample: float = 1.0
    objective: str = "squared_error"
    huber_delta: float = 1.0
    one_minus_target: bool = False
    early_stopping_rounds: int | None = None
    seed: int = 0
    max_bins: int = 256
    min_data_in_leaf: int = 1

    def __post_init__(self):
        if self.depth < 1:
            raise ModelError("depth must be >= 1")
        if self.n_estimators < 0:
            raise ModelError("n_estimators must be >= 0")
        if not self.learning_rate > 0:
            raise ModelError("learning_rate must be positive")
        if self.l2_leaf_reg < 0:
            raise ModelError("l2_leaf_reg must be >= 0")
        if not (0 < self.colsample_bylevel <= 1 and 0 < self.subsample <= 1):
            raise ModelError("colsample_bylevel and subsample must lie in (0, 1]")
        if self.objective not in OBJECTIVES:
            raise ModelError(f"objective must be one of {OBJECTIVES}")
        if not self.huber_delta > 0:
            raise ModelError("huber_delta must be positive")
        if self.early_stopping_rounds is not None and self.early_stopping_rounds < 1:
            raise ModelError("early_stopping_rounds must be >= 1")
        if not 1 <= self.max_bins <= 256:
            raise ModelError("max_bins must lie in [1, 256]")
        if self.min_data_in_leaf < 1:
            raise ModelError("min_data_in_leaf must be >= 1")

    def replace(self, **changes) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), **changes})


# ---------------------------------------------------------------------------
# objectives

def huber_loss(residual, delta: float = 1.0):
    r = np.abs(np.asarray(residual, dtype=float))
    return np.where(r <= delta, 0.5 * r * r, delta * (r - 0.5 * delta))


def huber_pseudo_gradient(residual, delta: float = 1.0):
    """Negative derivative of the Huber loss with respect to the prediction."""
    return np.clip(np.asarray(residual, dtype=float), -delta, delta)


def pointwise_loss(residual, config: TrainConfig):
    if config.objective == "huber":
        return huber_loss(residual, config.huber_delta)
    r = np.asarray(residual, dtype=float)
    return 0.5 * r * r


def _grad_hess(residual: np.ndarray, w: np.ndarray, config: TrainConfig):
    # Huber uses unit curvature (an upper bound of its second derivative),
    # so every Newton step is a majorization step.
    if config.objective == "huber":
        return -w * huber_pseudo_gradient(residual, config.huber_delta), w
    return -w * residual, w


def weighted_loss(y, pred, weights=None, config: TrainConfig = TrainConfig()) -> float:
    """Weighted mean objective of ``y - pred`` (the quantity recorded in the trace)."""
    y = np.asarray(y, dtype=float)
    r = y - np.asarray(pred, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    return float(np.sum(w * pointwise_loss(r, config)) / np.sum(w))


# ---------------------------------------------------------------------------
# binning

def _missing_mask(X: np.ndarray) -> np.ndarray:
    return (X == MISSING) | np.isnan(X)


class BinMapper:
    """Per-feature cut points; code 0 is missing, code c >= 1 means c-1 cuts lie below."""

    def __init__(self, cuts: list[np.ndarray]):
        self.cuts = cuts

    @classmethod
    def fit(cls, X: np.ndarray, weights: np.ndarray, max_bins: int = 256) -> "BinMapper":
        miss = _missing_mask(X)
        cuts = []
        for j in range(X.shape[1]):
            ok = ~miss[:, j]
            uniq, inv = np.unique(X[ok, j], return_inverse=True)
            if uniq.size <= 1:
                cuts.append(np.empty(0))
                continue
            mids = uniq[:-1] + (uniq[1:] - uniq[:-1]) / 2.0
            if uniq.size - 1 <= max_bins:
                cuts.append(mids)
                continue
            # weighted quantiles over distinct values
            wu = np.bincount(inv.ravel(), weights=weights[ok], minlength=uniq.size)
            cum = np.cumsum(wu)
            cum /= cum[-1]
            qs = np.arange(1, max_bins + 1) / (max_bins + 1)
            pos = np.minimum(np.searchsorted(cum, qs, side="left"), uniq.size - 2)
            cuts.append(np.unique(mids[pos]))
        return cls(cuts)

    @property
    def n_features(self) -> int:
        return len(self.cuts)

    def transform(self, X: np.ndarray) -> np.ndarray:
        miss = _missing_mask(X)
        codes = np.zeros(X.shape, dtype=np.uint16)
        for j, c in enumerate(self.cuts):
            codes[:, j] = np.searchsorted(c, X[:, j], side="left") + 1
        codes[miss] = 0
        return codes


# ---------------------------------------------------------------------------
# trees

@dataclass
class Tree:
    """Flat node arrays; ``feature[k] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    threshold_code: np.ndarray
    missing_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=np.int64)
        for k in range(self.n_nodes):
            if self.feature[k] >= 0:
                d[self.left[k]] = d[self.right[k]] = d[k] + 1
        return int(d.max())

    def _route(self, go_left_fn, n: int) -> np.ndarray:
        node = np.zeros(n, dtype=np.int64)
        while True:
            f = self.feature[node]
            active = np.nonzero(f >= 0)[0]
            if active.size == 0:
                return node
            nd = node[active]
            left = go_left_fn(active, f[active], nd)
            node[active] = np.where(left, self.left[nd], self.right[nd])

    def leaves_for_codes(self, codes: np.ndarray) -> np.ndarray:
        def go_left(rows, feats, nd):
            c = codes[rows, feats].astype(np.int64)
            return np.where(c == 0, self.missing_left[nd], c <= self.threshold_code[nd])
        return self._route(go_left, codes.shape[0])

    def leaves_for_values(self, X: np.ndarray) -> np.ndarray:
        def go_left(rows, feats, nd):
            v = X[rows, feats]
            miss = (v == MISSING) | np.isnan(v)
            return np.where(miss, self.missing_left[nd], v <= self.threshold[nd])
        return self._route(go_left, X.shape[0])

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "threshold_code": self.threshold_code.tolist(),
            "missing_left": self.missing_left.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.array(d["feature"], dtype=np.int64),
            np.array(d["threshold"], dtype=float),
            np.array(d["threshold_code"], dtype=np.int64),
            np.array(d["missing_left"], dtype=bool),
            np.array(d["left"], dtype=np.int64),
            np.array(d["right"], dtype=np.int64),
            np.array(d["value"], dtype=float),
            np.array(d["gain"], dtype=float),
        )


@njit(cache=True, nogil=True)
def _histograms(codes, rows, node_pos, feats, g, h, n_nodes, stride):
    """Per node, feature slot and code: summed gradient, hessian and row count."""
    k = feats.size
    hist = np.zeros((n_nodes, k, stride, 3))
    for i in range(rows.size):
        p = node_pos[i]
        if p < 0:
            continue
        r = rows[i]
        gi = g[i]
        hi = h[i]
        for j in range(k):
            cell = hist[p, j, codes[r, feats[j]]]
            cell[0] += gi
            cell[1] += hi
            cell[2] += 1.0
    return hist


@njit(cache=True, nogil=True)
def _best_splits(hist, lam, min_leaf, floor):
    """Best (gain, feature slot, code limit, missing-left) per node.

    Scan order is feature slot, then code, then missing direction (right
    first); only strictly larger gains replace the incumbent, so ties go to
    the lower feature and the lower threshold.
    """
    n_nodes, k, stride, _ = hist.shape
    best_gain = np.full(n_nodes, -np.inf)
    best_slot = np.full(n_nodes, -1, dtype=np.int64)
    best_code = np.zeros(n_nodes, dtype=np.int64)
    best_mleft = np.zeros(n_nodes, dtype=np.bool_)
    for p in range(n_nodes):
        G = 0.0
        H = 0.0
        C = 0.0
        for t in range(stride):
            G += hist[p, 0, t, 0]
            H += hist[p, 0, t, 1]
            C += hist[p, 0, t, 2]
        parent = G * G / (max(H, floor) + lam)
        for j in range(k):
            mg = hist[p, j, 0, 0]
            mh = hist[p, j, 0, 1]
            mc = hist[p, j, 0, 2]
            gl = 0.0
            hl = 0.0
            cl = 0.0
            for t in range(1, stride):
                if hist[p, j, t, 2] == 0.0:
                    continue
                gl += hist[p, j, t, 0]
                hl += hist[p, j, t, 1]
                cl += hist[p, j, t, 2]
                for d in range(2):
                    if d == 1 and mc == 0.0:
                        break
                    GL = gl + mg * d
                    HL = hl + mh * d
                    CL = cl + mc * d
                    if CL < min_leaf or C - CL < min_leaf:
                        continue
                    GR = G - GL
                    HR = H - HL
                    gain = (GL * GL / (max(HL, floor) + lam)
                            + GR * GR / (max(HR, floor) + lam) - parent)
                    if gain > best_gain[p]:
                        best_gain[p] = gain
                        best_slot[p] = j
                        best_code[p] = t
                        best_mleft[p] = d == 1
    return best_gain, best_slot, best_code, best_mleft


class _TreeBuilder:
    def __init__(self, codes: np.ndarray, mapper: BinMapper, config: TrainConfig, rng: np.random.Generator):
        self.codes = codes
        self.mapper = mapper
        self.config = config
        self.rng = rng
        self.n_features = codes.shape[1]
        self.stride = max((c.size for c in mapper.cuts), default=0) + 2

    def _level_features(self) -> np.ndarray:
        nf = self.n_features
        rate = self.config.colsample_bylevel
        if rate >= 1.0:
            return np.arange(nf, dtype=np.int64)
        k = max(1, int(round(rate * nf)))
        return np.sort(self.rng.choice(nf, size=k, replace=False)).astype(np.int64)

    def build(self, rows: np.ndarray, g: np.ndarray, h: np.ndarray) -> Tree:
        cfg = self.config
        lam = float(cfg.l2_leaf_reg)
        feature, threshold, tcode, mleft, left, right, gain = [-1], [0.0], [0], [False], [-1], [-1], [0.0]
        row_node = np.zeros(rows.size, dtype=np.int64)
        frontier = [0]

        for _ in range(cfg.depth):
            counts = np.bincount(row_node, minlength=len(feature))
            split_ok = [n for n in frontier if counts[n] >= 2 * cfg.min_data_in_leaf]
            if not split_ok:
                break
            sel = self._level_features()
            pos_of_node = np.full(len(feature), -1, dtype=np.int64)
            pos_of_node[split_ok] = np.arange(len(split_ok))
            hist = _histograms(self.codes, rows, pos_of_node[row_node], sel, g, h, len(split_ok), self.stride)
            bgain, bslot, bcode, bml = _best_splits(hist, lam, float(cfg.min_data_in_leaf), HESSIAN_FLOOR)

            new_frontier = []
            for q, node in enumerate(split_ok):
                if not bgain[q] > MIN_SPLIT_GAIN:
                    continue
                f = int(sel[bslot[q]])
                code_limit = int(bcode[q])
                lc, rc = len(feature), len(feature) + 1
                for _child in (lc, rc):
                    feature.append(-1)
                    threshold.append(0.0)
                    tcode.append(0)
                    mleft.append(False)
                    left.append(-1)
                    right.append(-1)
                    gain.append(0.0)
                cuts = self.mapper.cuts[f]
                feature[node] = f
                tcode[node] = code_limit
                # past the last cut every non-missing value goes left
                threshold[node] = float(cuts[code_limit - 1]) if code_limit <= cuts.size else ALL_LEFT
                mleft[node] = bool(bml[q])
                left[node], right[node] = lc, rc
                gain[node] = float(bgain[q])
                members = np.nonzero(row_node == node)[0]
                c = self.codes[rows[members], f].astype(np.int64)
                go_left = np.where(c == 0, mleft[node], c <= code_limit)
                row_node[members] = np.where(go_left, lc, rc)
                new_frontier += [lc, rc]
            if not new_frontier:
                break
            frontier = new_frontier

        n_nodes = len(feature)
        G = np.bincount(row_node, weights=g, minlength=n_nodes)
        H = np.bincount(row_node, weights=h, minlength=n_nodes)
        value = -G / (np.maximum(H, HESSIAN_FLOOR) + lam)
        feat = np.array(feature, dtype=np.int64)
        value[feat >= 0] = 0.0
        return Tree(feat, np.array(threshold), np.array(tcode, dtype=np.int64), np.array(mleft, dtype=bool),
                    np.array(left, dtype=np.int64), np.array(right, dtype=np.int64), value, np.array(gain))


# ---------------------------------------------------------------------------
# ensemble

@dataclass
class Ensemble:
    """Fitted model. Reported prediction = base + sign * learning_rate * sum of leaf values,
    where sign is -1 when the model was fitted on ``1 - y``."""

    feature_names: list[str]
    config: TrainConfig
    base_prediction: float
    trees: list[Tree] = field(default_factory=list)
    train_trace: list[float] = field(default_factory=list)
    valid_trace: list[float] = field(default_factory=list)
    best_iteration: int | None = None

    @property
    def sign(self) -> float:
        return -1.0 if self.config.one_minus_target else 1.0

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def raw_sum(self, X: np.ndarray) -> np.ndarray:
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.value[tree.leaves_for_values(X)]
        return total

    def predict_transformed(self, X) -> np.ndarray:
        """Prediction in the space the trees were fitted in (``1 - y`` for one-minus models)."""
        X = _as_array(X, self.feature_names)
        base_t = 1.0 - self.base_prediction if self.config.one_minus_target else self.base_prediction
        return base_t + self.config.learning_rate * self.raw_sum(X)

    def predict(self, X) -> np.ndarray:
        X = _as_array(X, self.feature_names)
        return self.base_prediction + self.sign * (self.config.learning_rate * self.raw_sum(X))

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "feature_names": list(self.feature_names),
            "config": asdict(self.config),
            "base_prediction": self.base_prediction,
            "best_iteration": self.best_iteration,
            "train_trace": list(self.train_trace),
            "valid_trace": list(self.valid_trace),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Ensemble":
        if d.get("format") != FORMAT_NAME:
            raise ModelError("not a cellqos model file")
        if d.get("version") != FORMAT_VERSION:
            raise ModelError(f"unsupported model version {d.get('version')}")
        return cls(
            list(d["feature_names"]),
            TrainConfig(**d["config"]),
            float(d["base_prediction"]),
            [Tree.from_dict(t) for t in d["trees"]],
            list(d["train_trace"]),
            list(d["valid_trace"]),
            d["best_iteration"],
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Ensemble":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _as_array(X, expected_names: Sequence[str] | None = None) -> np.ndarray:
    if isinstance(X, FeatureMatrix):
        if CATEGORICAL in X.kinds:
            raise ModelError("categorical columns must be encoded before modeling")
        if expected_names is not None and list(X.names) != list(expected_names):
            raise ModelError("feature manifest does not match the training manifest")
        return np.asarray(X.data, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ModelError("expected a 2-D feature matrix")
    if expected_names is not None and X.shape[1] != len(expected_names):
        raise ModelError(f"expected {len(expected_names)} columns, got {X.shape[1]}")
    return X


def _names_of(X, n_features: int) -> list[str]:
    if isinstance(X, FeatureMatrix):
        return list(X.names)
    return [f"f{j}" for j in range(n_features)]


def fit(X, y, weights=None, config: TrainConfig = TrainConfig(), validation=None) -> Ensemble:
    """Fit a boosted ensemble.

    ``validation`` is an optional ``(X_valid, y_valid)`` pair; with
    ``early_stopping_rounds`` set, boosting stops once the validation loss
    has not improved for that many rounds and the best prefix is kept.
    """
    given = X
    X = _as_array(X)
    names = _names_of(given, X.shape[1])
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if n == 0 or X.shape[1] == 0:
        raise ModelError("empty feature matrix")
    if y.shape != (n,):
        raise ModelError(f"target length {y.shape} does not match {n} rows")
    if not np.all(np.isfinite(y)):
        raise ModelError("target contains non-finite values")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n,) or not np.all(np.isfinite(w)) or np.any(w < 0) or w.sum() <= 0:
        raise ModelError("weights must be finite, non-negative, one per row, with positive sum")

    base = float(y[0]) if np.all(y == y[0]) else float(np.sum(w * y) / np.sum(w))
    t = 1.0 - y if config.one_minus_target else y
    base_t = 1.0 - base if config.one_minus_target else base

    mapper = BinMapper.fit(X, w, config.max_bins)
    codes = mapper.transform(X)
    rng = np.random.default_rng(config.seed)
    builder = _TreeBuilder(codes, mapper, config, rng)

    if validation is not None:
        Xv = _as_array(validation[0], names)
        yv = np.asarray(validation[1], dtype=float)
        tv = 1.0 - yv if config.one_minus_target else yv
        codes_v = mapper.transform(Xv)
        sum_v = np.zeros(Xv.shape[0])

    ens = Ensemble(names, config, base)
    sum_train = np.zeros(n)
    lr = config.learning_rate
    best_loss = math.inf
    best_iter = None
    m = n if config.subsample >= 1.0 else max(1, int(round(config.subsample * n)))

    for it in range(config.n_estimators):
        F = base_t + lr * sum_train
        g, h = _grad_hess(t - F, w, config)
        rows = np.arange(n) if m == n else np.sort(rng.choice(n, size=m, replace=False))
        tree = builder.build(rows, g[rows], h[rows])
        ens.trees.append(tree)
        sum_train += tree.value[tree.leaves_for_codes(codes)]
        ens.train_trace.append(weighted_loss(t, base_t + lr * sum_train, w, config))

        if validation is not None:
            sum_v += tree.value[tree.leaves_for_codes(codes_v)]
            vloss = weighted_loss(tv, base_t + lr * sum_v, None, config)
            ens.valid_trace.append(vloss)
            if vloss < best_loss:
                best_loss, best_iter = vloss, it
            elif config.early_stopping_rounds is not None and it - best_iter >= config.early_stopping_rounds:
                break

    if validation is not None and config.early_stopping_rounds is not None and best_iter is not None:
        keep = best_iter + 1
        ens.trees = ens.trees[:keep]
        ens.train_trace = ens.train_trace[:keep]
        ens.valid_trace = ens.valid_trace[:keep]
        ens.best_iteration = best_iter
    return ens


def predict(ensemble: Ensemble, X) -> np.ndarray:
    return ensemble.predict(X)


def feature_importance(ensemble: Ensemble) -> dict[str, float]:
    """Share of total split gain per feature (features never split on are omitted)."""
    totals = np.zeros(len(ensemble.feature_names))
    for tree in ensemble.trees:
        internal = tree.feature >= 0
        np.add.at(totals, tree.feature[internal], tree.gain[internal])
    s = totals.sum()
    if s <= 0:
        return {}
    return {ensemble.feature_names[j]: float(totals[j] / s) for j in np.nonzero(totals)[0]}
