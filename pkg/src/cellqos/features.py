"""Feature engineering: derived counter ratios, scene moments, interferer
statistics, comparison indicators and neighborhood counts, assembled into a
named-column matrix.

Missing values are carried as the ``MISSING`` sentinel, never NaN or inf.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Mapping, Sequence

import numpy as np

from .data_model import CellRecord, Dataset, parse_txrx
from .landuse import CATEGORIES, LandUseGrid, scene_moments
from .spatial import DEFAULT_BUCKET_SIZE, CellContext, CellLayout, build_index, cell_context

MISSING = -1.0e30

NUMERIC = "numeric"
CATEGORICAL = "categorical"

RAW_NUMERIC = (
    "longitude", "latitude", "azimuth", "height", "dl_narfcn", "dl_bandwidth",
    "dl_prb_avail", "dl_prb_usage", "ul_prb_avail", "online_users",
    "dl_concurrent_users", "ul_concurrent_users", "dl_traffic", "ul_traffic", "total_traffic",
)
RAW_CATEGORICAL = ("duplex_mode", "frequency_band", "txrx_mode", "subframe_assignment", "special_patterns")
# column order of the raw block follows the cells table
RAW_COLUMNS = (
    "longitude", "latitude", "azimuth", "height", "duplex_mode", "dl_narfcn", "frequency_band",
    "dl_bandwidth", "txrx_mode", "subframe_assignment", "special_patterns", "dl_prb_avail",
    "dl_prb_usage", "ul_prb_avail", "online_users", "dl_concurrent_users", "ul_concurrent_users",
    "dl_traffic", "ul_traffic", "total_traffic",
)

STAT_FEATURES = (
    "height", "online_users", "dl_prb_avail", "dl_prb_usage", "prb_used_dl", "dl_traffic",
    "ul_traffic", "dl_concurrent_users", "ul_concurrent_users", "dl_volume_speed",
    "ul_volume_speed", "dl_per_co_user_per_prb",
)
STAT_NAMES = (
    "ratio_le", "ratio_gt", "mean", "mean_plus_std", "mean_minus_std", "median", "max",
    "p25", "p75", "pbin1", "pbin2", "pbin3", "pbin4",
)
AGGREGATES = ("mean", "median", "max", "p25", "p75")
COMPARISON_NAMES = ("cmp_sign", "rel_acc", "mag_ratio")
CONTEXT_NAMES = (
    "n_neighbors", "n_interferers",
    "neighbor_dist_min", "neighbor_dist_mean", "neighbor_dist_max",
    "interferer_dist_min", "interferer_dist_mean", "interferer_dist_max",
)
RADIUS_LABELS = ("near", "quasi_near", "far")


class AssemblyError(ValueError):
    pass


class PreprocessError(ValueError):
    pass


def is_missing(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return (v == MISSING) | ~np.isfinite(v)


# ---------------------------------------------------------------------------
# derived features

@dataclass(frozen=True)
class DerivedFeatures:
    tx: float
    rx: float
    prb_used_dl: float
    ratio_co_users: float
    users_per_prb_dl: float
    users_per_used_prb_dl: float
    users_per_prb_ul: float
    dl_volume_speed: float
    ul_volume_speed: float
    dl_volume_per_tx: float
    dl_traffic_per_bandwidth: float
    dl_volume_per_usage_pct: float
    dl_per_co_user_per_prb: float
    dl_per_co_user_per_used_prb: float
    ul_per_co_user_per_prb: float


DERIVED_NAMES = tuple(f.name for f in fields(DerivedFeatures))


def safe_div(num, den):
    """Elementwise ``num / den``; MISSING where den is 0 or either side is missing."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    bad = is_missing(num) | is_missing(den) | (den == 0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.where(bad, MISSING, num / np.where(bad, 1.0, den))
    out = np.where(np.isfinite(out), out, MISSING)
    return float(out) if out.ndim == 0 else out


def derived_table(records: Sequence[CellRecord]) -> np.ndarray:
    """Derived features for many records, shape ``(n, 15)`` in DERIVED_NAMES order."""
    def col(name):
        return np.array([getattr(r, name) for r in records], dtype=float)

    tx = np.empty(len(records))
    rx = np.empty(len(records))
    for k, r in enumerate(records):
        try:
            tx[k], rx[k] = parse_txrx(r.txrx_mode)
        except ValueError:
            tx[k] = rx[k] = MISSING

    p_dl, rp_dl, p_ul = col("dl_prb_avail"), col("dl_prb_usage"), col("ul_prb_avail")
    u_dl, u_ul = col("dl_concurrent_users"), col("ul_concurrent_users")
    v_dl, v_ul, b_dl = col("dl_traffic"), col("ul_traffic"), col("dl_bandwidth")

    p_used = p_dl * rp_dl / 100.0
    v_per_u_dl = safe_div(v_dl, u_dl)
    v_per_u_ul = safe_div(v_ul, u_ul)
    cols = [
        tx,
        rx,
        p_used,
        safe_div(u_dl, u_ul),
        safe_div(u_dl, p_dl),
        safe_div(u_dl, p_used),
        safe_div(u_ul, p_ul),
        v_per_u_dl,
        v_per_u_ul,
        safe_div(v_dl, tx),
        safe_div(v_dl, b_dl),
        safe_div(v_dl, rp_dl),
        safe_div(v_per_u_dl, p_dl),
        safe_div(v_per_u_dl, p_used),
        safe_div(v_per_u_ul, p_ul),
    ]
    return np.column_stack(cols) if records else np.empty((0, len(DERIVED_NAMES)))


def derive_features(record: CellRecord) -> DerivedFeatures:
    row = derived_table([record])[0]
    return DerivedFeatures(*(float(v) for v in row))


def base_feature_table(records: Sequence[CellRecord], derived: np.ndarray | None = None,
                       names: Sequence[str] = STAT_FEATURES) -> np.ndarray:
    """Columns named in ``names``, drawn from raw record fields or derived features."""
    if derived is None:
        derived = derived_table(records)
    out = np.empty((len(records), len(names)))
    for j, name in enumerate(names):
        if name in DERIVED_NAMES:
            out[:, j] = derived[:, DERIVED_NAMES.index(name)]
        else:
            out[:, j] = [float(getattr(r, name)) for r in records]
    return out


# ---------------------------------------------------------------------------
# interferer statistics

@dataclass(frozen=True)
class StatBundle:
    ratio_le: float
    ratio_gt: float
    mean: float
    mean_plus_std: float
    mean_minus_std: float
    median: float
    max: float
    p25: float
    p75: float
    bin_counts: tuple[float, float, float, float]

    @property
    def std(self) -> float:
        if self.mean == MISSING:
            return MISSING
        return self.mean_plus_std - self.mean

    def as_array(self) -> np.ndarray:
        return np.array([self.ratio_le, self.ratio_gt, self.mean, self.mean_plus_std,
                         self.mean_minus_std, self.median, self.max, self.p25, self.p75,
                         *self.bin_counts])


def percentiles_sorted(sorted_values: np.ndarray, qs: Sequence[float]) -> np.ndarray:
    """Linear-interpolation percentiles of an ascending array along axis 0."""
    n = sorted_values.shape[0]
    out = []
    for q in qs:
        pos = q / 100.0 * (n - 1)
        lo = int(math.floor(pos))
        hi = min(lo + 1, n - 1)
        frac = pos - lo
        a, b = sorted_values[lo], sorted_values[hi]
        out.append(a + (b - a) * frac if frac else a)
    return np.array(out)


def _stats_sorted(own: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Stat vectors for columns of a sorted, missing-free block ``s`` (k, F)."""
    k, nf = s.shape
    out = np.empty((nf, len(STAT_NAMES)))
    p0, p25, p50, p75, p100 = percentiles_sorted(s, (0, 25, 50, 75, 100))
    mean = s.mean(axis=0)
    std = s.std(axis=0)
    own_ok = ~is_missing(own)
    le = (s <= own).sum(axis=0) / k
    out[:, 0] = np.where(own_ok, le, MISSING)
    out[:, 1] = np.where(own_ok, 1.0 - le, MISSING)
    out[:, 2] = mean
    out[:, 3] = mean + std
    out[:, 4] = mean - std
    out[:, 5] = p50
    out[:, 6] = p100
    out[:, 7] = p25
    out[:, 8] = p75
    # bins [p0, p25], (p25, p50], (p50, p75], (p75, p100]
    c1 = (s <= p25).sum(axis=0)
    c2 = (s <= p50).sum(axis=0)
    c3 = (s <= p75).sum(axis=0)
    out[:, 9] = c1 / k
    out[:, 10] = (c2 - c1) / k
    out[:, 11] = (c3 - c2) / k
    out[:, 12] = (k - c3) / k
    # extreme magnitudes can overflow the variance
    out[~np.isfinite(out)] = MISSING
    return out


@np.errstate(over="ignore", invalid="ignore")
def stat_block(own: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Stat vectors (F, 13) of each column of ``values`` (k, F) against ``own`` (F,)."""
    values = np.asarray(values, dtype=float).reshape(-1, len(own))
    own = np.asarray(own, dtype=float)
    nf = len(own)
    if values.shape[0] == 0:
        return np.full((nf, len(STAT_NAMES)), MISSING)
    miss = is_missing(values)
    if not miss.any():
        return _stats_sorted(own, np.sort(values, axis=0))
    out = np.full((nf, len(STAT_NAMES)), MISSING)
    for j in range(nf):
        col = values[~miss[:, j], j]
        if col.size:
            out[j] = _stats_sorted(own[j:j + 1], np.sort(col)[:, None])[0]
    return out


def interferer_stats(own_value: float, values) -> StatBundle:
    """Statistics of interfering cells' values of one feature, relative to the own value."""
    v = stat_block(np.array([own_value], dtype=float), np.asarray(values, dtype=float).reshape(-1, 1))[0]
    return StatBundle(*(float(x) for x in v[:9]), tuple(float(x) for x in v[9:]))


def _log_positive(v: np.ndarray) -> np.ndarray:
    ok = (v > 0) & ~is_missing(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(ok, np.log(np.where(ok, v, 1.0)), np.nan)


def comparison_block(f_c, f_n) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sign indicator, relative accuracy and magnitude ratio, elementwise."""
    f_c = np.asarray(f_c, dtype=float)
    f_n = np.asarray(f_n, dtype=float)
    either = is_missing(f_c) | is_missing(f_n)
    sign = np.where(either, MISSING, (f_c - f_n > 0).astype(float))
    ln_c = _log_positive(f_c)
    rel = _log_positive(f_n) - ln_c
    mag = _log_positive(np.where(either, MISSING, np.abs(f_c - f_n))) - ln_c
    rel = np.where(np.isfinite(rel), rel, MISSING)
    mag = np.where(np.isfinite(mag), mag, MISSING)
    return sign, rel, mag


def comparison_features(f_c: float, f_n: float) -> tuple[float, float, float]:
    sign, rel, mag = comparison_block(f_c, f_n)
    return float(sign), float(rel), float(mag)


def context_counts(ctx: CellContext | None) -> np.ndarray:
    """n_neighbors, n_interferers, then min/mean/max distance over each set."""
    out = np.full(len(CONTEXT_NAMES), MISSING)
    if ctx is None:
        out[:2] = 0.0
        return out
    out[0] = ctx.neighbors.size
    inter = ctx.interferer_distances
    out[1] = inter.size
    for k, d in ((2, ctx.distances), (5, inter)):
        if d.size:
            out[k:k + 3] = (d.min(), d.mean(), d.max())
    return out


# ---------------------------------------------------------------------------
# matrix

@dataclass(frozen=True)
class FeatureConfig:
    scene_radii: tuple[float, float, float] = (300.0, 1000.0, 3000.0)
    stat_features: tuple[str, ...] = STAT_FEATURES
    comparison_aggregates: tuple[str, ...] = ("mean", "median")
    bucket_size: float = DEFAULT_BUCKET_SIZE

    def __post_init__(self):
        bad = [a for a in self.comparison_aggregates if a not in AGGREGATES]
        if bad:
            raise ValueError(f"unknown comparison aggregates: {bad}")
        if len(self.scene_radii) != len(RADIUS_LABELS):
            raise ValueError("scene_radii needs near, quasi-near and far radii")


def manifest(config: FeatureConfig = FeatureConfig()) -> list[tuple[str, str]]:
    """Ordered ``(name, kind)`` column manifest for a configuration."""
    cols = [(n, CATEGORICAL if n in RAW_CATEGORICAL else NUMERIC) for n in RAW_COLUMNS]
    cols += [(n, NUMERIC) for n in DERIVED_NAMES]
    for label in RADIUS_LABELS:
        for cat in CATEGORIES:
            cols += [(f"scene_{label}_{cat}_mean", NUMERIC), (f"scene_{label}_{cat}_var", NUMERIC)]
    for feat in config.stat_features:
        cols += [(f"intf_{feat}__{s}", NUMERIC) for s in STAT_NAMES]
        for agg in config.comparison_aggregates:
            cols += [(f"intf_{feat}__{c}_{agg}", NUMERIC) for c in COMPARISON_NAMES]
    cols += [(n, NUMERIC) for n in CONTEXT_NAMES]
    return cols


@dataclass
class FeatureMatrix:
    """Numeric matrix with a named column manifest.

    Categorical columns hold integer codes into ``levels[name]``.
    """

    names: list[str]
    kinds: list[str]
    keys: list[str]
    data: np.ndarray
    levels: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        if self.data.shape != (len(self.keys), len(self.names)):
            raise AssemblyError(f"data shape {self.data.shape} does not match "
                                f"{len(self.keys)} keys x {len(self.names)} columns")

    @property
    def width(self) -> int:
        return len(self.names)

    def __len__(self) -> int:
        return len(self.keys)

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.names.index(name)]

    def categorical_columns(self) -> list[str]:
        return [n for n, k in zip(self.names, self.kinds) if k == CATEGORICAL]

    def labels(self, name: str) -> list[str]:
        lv = self.levels[name]
        return [lv[int(c)] if c != MISSING else "" for c in self.column(name)]

    def take(self, keys: Sequence[str]) -> "FeatureMatrix":
        pos = {k: i for i, k in enumerate(self.keys)}
        try:
            rows = [pos[k] for k in keys]
        except KeyError as exc:
            raise AssemblyError(f"unknown row key {exc.args[0]!r}") from None
        return FeatureMatrix(list(self.names), list(self.kinds), list(keys), self.data[rows], dict(self.levels))

    def to_csv(self, path) -> None:
        """Header line of column kinds (``#kind,...``), then names, then rows.

        Missing values are written as empty fields.
        """
        cat_idx = {j for j, k in enumerate(self.kinds) if k == CATEGORICAL}
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["#kind", *self.kinds])
            w.writerow(["cell_name", *self.names])
            for key, row in zip(self.keys, self.data):
                out = [key]
                for j, v in enumerate(row):
                    if v == MISSING:
                        out.append("")
                    elif j in cat_idx:
                        out.append(self.levels[self.names[j]][int(v)])
                    else:
                        out.append(repr(float(v)))
                w.writerow(out)

    @classmethod
    def from_csv(cls, path) -> "FeatureMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            kinds = next(reader)[1:]
            names = next(reader)[1:]
            rows = list(reader)
        keys = [r[0] for r in rows]
        data = np.full((len(rows), len(names)), MISSING)
        levels: dict[str, list[str]] = {}
        for j, (name, kind) in enumerate(zip(names, kinds)):
            raw = [r[j + 1] for r in rows]
            if kind == CATEGORICAL:
                lv = sorted({v for v in raw if v != ""})
                levels[name] = lv
                index = {v: i for i, v in enumerate(lv)}
                data[:, j] = [index[v] if v != "" else MISSING for v in raw]
            else:
                data[:, j] = [float(v) if v != "" else MISSING for v in raw]
        return cls(names, kinds, keys, data, levels)


def _group_by_city_operator(records: Sequence[CellRecord]) -> dict[tuple[str, str], list[int]]:
    groups: dict[tuple[str, str], list[int]] = {}
    for i, r in enumerate(records):
        groups.setdefault(r.city_operator, []).append(i)
    return dict(sorted(groups.items()))


def compute_neighborhoods(dataset: Dataset, bucket_size: float = DEFAULT_BUCKET_SIZE,
                          threads: int = 1) -> tuple[dict[str, CellContext], dict[tuple[str, str], CellLayout]]:
    """Neighbor/interferer context for each modeling record, keyed by cell name.

    Each city-operator is projected about its own centroid and searched
    against its full (unfiltered) universe.
    """
    universe = dataset.universe
    groups = _group_by_city_operator(universe)
    wanted = {r.cell_name for r in dataset.records}

    def run(item):
        key, members = item
        recs = [universe[i] for i in members]
        layout = CellLayout.from_records(recs)
        index = build_index(layout, bucket_size)
        ctxs = {layout.names[k]: cell_context(k, layout, index)
                for k in range(len(recs)) if layout.names[k] in wanted}
        return key, layout, ctxs

    items = list(groups.items())
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, items))
    else:
        results = [run(it) for it in items]

    contexts: dict[str, CellContext] = {}
    layouts: dict[tuple[str, str], CellLayout] = {}
    for key, layout, ctxs in results:
        layouts[key] = layout
        contexts.update(ctxs)
    return contexts, layouts


def _category_levels(records: Sequence[CellRecord]) -> dict[str, list[str]]:
    levels = {}
    for name in RAW_CATEGORICAL:
        vals = {getattr(r, name) for r in records}
        levels[name] = sorted(v.value if hasattr(v, "value") else str(v) for v in vals)
    return levels


def build_feature_matrix(dataset: Dataset, landuse: Mapping[str, LandUseGrid] | None = None,
                         config: FeatureConfig = FeatureConfig(), threads: int = 1) -> FeatureMatrix:
    """Feature rows for every modeling record in ``dataset``, in record order."""
    cols = manifest(config)
    names = [n for n, _ in cols]
    kinds = [k for _, k in cols]
    records = list(dataset.records)
    universe = dataset.universe
    landuse = landuse or {}

    levels = _category_levels(universe)
    level_index = {n: {v: i for i, v in enumerate(lv)} for n, lv in levels.items()}

    derived_u = derived_table(universe)
    base_u = base_feature_table(universe, derived_u, config.stat_features)
    upos = {r.cell_name: i for i, r in enumerate(universe)}

    contexts, layouts = compute_neighborhoods(dataset, config.bucket_size, threads)
    # layout indices -> universe indices, per city-operator
    layout_to_universe = {key: np.array([upos[n] for n in lay.names], dtype=np.int64)
                          for key, lay in layouts.items()}

    n_raw = len(RAW_COLUMNS)
    n_der = len(DERIVED_NAMES)
    n_scene = len(RADIUS_LABELS) * len(CATEGORIES) * 2
    agg_idx = [STAT_NAMES.index(a) for a in config.comparison_aggregates]
    per_feat = len(STAT_NAMES) + len(COMPARISON_NAMES) * len(agg_idx)

    data = np.full((len(records), len(names)), MISSING)
    for row, rec in enumerate(records):
        u = upos[rec.cell_name]
        out = data[row]
        for j, name in enumerate(RAW_COLUMNS):
            v = getattr(rec, name)
            if name in RAW_CATEGORICAL:
                out[j] = level_index[name][v.value if hasattr(v, "value") else str(v)]
            else:
                out[j] = float(v)
        out[n_raw:n_raw + n_der] = derived_u[u]

        moments = scene_moments(landuse.get(rec.city), rec.longitude, rec.latitude, config.scene_radii)
        if moments is not None:
            out[n_raw + n_der:n_raw + n_der + n_scene] = moments.ravel()

        ctx = contexts.get(rec.cell_name)
        start = n_raw + n_der + n_scene
        if ctx is not None and ctx.interferers.size:
            idx = layout_to_universe[rec.city_operator][ctx.interferers]
            own = base_u[u]
            stats = stat_block(own, base_u[idx])
            block = np.empty((len(own), per_feat))
            block[:, :len(STAT_NAMES)] = stats
            for a, k in enumerate(agg_idx):
                sign, rel, mag = comparison_block(own, stats[:, k])
                c0 = len(STAT_NAMES) + a * len(COMPARISON_NAMES)
                block[:, c0], block[:, c0 + 1], block[:, c0 + 2] = sign, rel, mag
            out[start:start + block.size] = block.ravel()
        out[-len(CONTEXT_NAMES):] = context_counts(ctx)

    return FeatureMatrix(names, kinds, [r.cell_name for r in records], data, levels)


def assemble_matrix(dataset: Dataset, kpi_map: Mapping[str, float],
                    landuse: Mapping[str, LandUseGrid] | None = None,
                    config: FeatureConfig = FeatureConfig(), threads: int = 1) -> tuple[FeatureMatrix, np.ndarray]:
    """Feature matrix and target for modeling records that have a KPI value."""
    known = {r.cell_name for r in dataset.universe}
    stray = sorted(set(kpi_map) - known)
    if stray:
        raise AssemblyError(f"KPI values for unknown cells: {stray[:5]}")
    keep = [r for r in dataset.records if r.cell_name in kpi_map]
    if not keep:
        raise AssemblyError("no modeling records have KPI values")
    sub = Dataset(tuple(keep), dataset.splits, dataset.universe)
    matrix = build_feature_matrix(sub, landuse, config, threads)
    target = np.array([kpi_map[k] for k in matrix.keys], dtype=float)
    return matrix, target


# ---------------------------------------------------------------------------
# preprocessing

STD_FLOOR = 1e-12


@dataclass
class ColumnTransform:
    """A fitted chain of transforms: ``reflect``, ``power:<lambda>``, ``standardize``, ``minmax``."""

    steps: list[str]
    params: list[tuple[float, float]] = field(default_factory=list)

    def fit_transform(self, v: np.ndarray) -> np.ndarray:
        self.params = []
        out = v.copy()
        for step in self.steps:
            out, p = _apply(step, out, None)
            self.params.append(p)
        return out

    def transform(self, v: np.ndarray) -> np.ndarray:
        out = v.copy()
        for step, p in zip(self.steps, self.params):
            out, _ = _apply(step, out, p)
        return out

    def inverse(self, v: np.ndarray) -> np.ndarray:
        out = np.asarray(v, dtype=float).copy()
        for step, (a, b) in reversed(list(zip(self.steps, self.params))):
            if step == "reflect":
                out = 1.0 - out
            elif step.startswith("power:"):
                out = np.power(np.clip(out, 0.0, None), 1.0 / float(step.split(":", 1)[1]))
            else:  # standardize / minmax: x' = (x - a) / b
                out = out * b + a
        return out


def _apply(step: str, v: np.ndarray, params):
    if step == "reflect":
        return 1.0 - v, (0.0, 0.0)
    if step.startswith("power:"):
        lam = float(step.split(":", 1)[1])
        if np.any(v < 0):
            raise PreprocessError(f"power transform needs non-negative values ({step})")
        return np.power(v, lam), (0.0, 0.0)
    if step == "standardize":
        a, b = params if params else (float(v.mean()) if v.size else 0.0,
                                      max(float(v.std()) if v.size else 0.0, STD_FLOOR))
        return (v - a) / b, (a, b)
    if step == "minmax":
        if params:
            a, b = params
        else:
            lo, hi = (float(v.min()), float(v.max())) if v.size else (0.0, 1.0)
            a, b = lo, max(hi - lo, STD_FLOOR)
        return (v - a) / b, (a, b)
    raise PreprocessError(f"unknown transform {step!r}")


@dataclass
class Preprocessor:
    """Per-column and target transforms; missing entries pass through untouched."""

    columns: dict[str, list[str]] = field(default_factory=dict)
    target: list[str] = field(default_factory=list)
    fitted: dict[str, ColumnTransform] = field(default_factory=dict)
    target_transform: ColumnTransform | None = None

    def fit_transform(self, matrix: FeatureMatrix, y: np.ndarray | None = None):
        data = matrix.data.copy()
        for name, steps in self.columns.items():
            j = matrix.names.index(name)
            ok = ~is_missing(data[:, j])
            t = ColumnTransform(list(steps))
            data[ok, j] = t.fit_transform(data[ok, j])
            self.fitted[name] = t
        out = FeatureMatrix(list(matrix.names), list(matrix.kinds), list(matrix.keys), data, dict(matrix.levels))
        if y is None:
            return out, None
        self.target_transform = ColumnTransform(list(self.target))
        return out, self.target_transform.fit_transform(np.asarray(y, dtype=float))

    def transform(self, matrix: FeatureMatrix) -> FeatureMatrix:
        data = matrix.data.copy()
        for name, t in self.fitted.items():
            j = matrix.names.index(name)
            ok = ~is_missing(data[:, j])
            data[ok, j] = t.transform(data[ok, j])
        return FeatureMatrix(list(matrix.names), list(matrix.kinds), list(matrix.keys), data, dict(matrix.levels))

    def inverse_target(self, y: np.ndarray) -> np.ndarray:
        if self.target_transform is None:
            return np.asarray(y, dtype=float)
        return self.target_transform.inverse(y)


def preprocess(matrix: FeatureMatrix, target: np.ndarray, column_steps: Mapping[str, Sequence[str]],
               target_steps: Sequence[str] = ()) -> tuple[FeatureMatrix, np.ndarray, Preprocessor]:
    pre = Preprocessor({k: list(v) for k, v in column_steps.items()}, list(target_steps))
    m, y = pre.fit_transform(matrix, target)
    return m, y, pre
