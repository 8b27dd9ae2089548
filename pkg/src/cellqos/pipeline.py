"""Run configuration and the file-to-file pipeline stages behind the CLI.

Every stage reads and writes only the paths named in :class:`PipelineConfig`;
relative paths resolve against ``workdir``.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .data_model import Dataset, filter_eligible, parse_cells, parse_split_manifest, write_cells
from .encoding import TargetEncoder
from .evaluation import (DESK_SPACE, REFERENCE_SPACE, TargetBins, baseline_predictions, coverage, mape,
                         random_search, repeated_folds, report)
from .features import FeatureConfig, FeatureMatrix, assemble_matrix, compute_neighborhoods
from .kpi import DEFAULT_BIN_EDGES, kpi_batch, read_kpi_table, read_slots_table, read_throughput_table, write_kpi_table
from .landuse import read_grid_dir
from .regressor import Ensemble, TrainConfig, fit
from .spatial import RULE_TAGS
from .synthdata import SynthConfig, generate_to
from .weighting import LdsConfig, lds_weights, read_weights, write_weights

logger = logging.getLogger(__name__)

SEARCH_SPACES = {"desk": DESK_SPACE, "reference": REFERENCE_SPACE}
_TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig))


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    workdir: str = "."
    # inputs
    cells: str = "cells.csv"
    throughput: str = "throughput.csv"
    slots: str = "slots.csv"
    splits: str = "splits.csv"
    landuse: str = "landuse"
    # outputs
    cells_clean: str = "cells_clean.csv"
    kpi: str = "kpi.csv"
    kpi_excluded: str = "kpi_excluded.csv"
    neighbors: str = "neighbors.csv"
    features: str = "features.csv"
    weights: str = "weights.csv"
    model: str = "model.json"
    encoder: str = "encoder.json"
    trials: str = "trials.jsonl"
    predictions: str = "predictions.csv"
    report: str = "report.csv"
    # kpi and features
    x: float = 100.0
    prb_threshold: float = 20.0
    scene_radii: tuple = (300.0, 1000.0, 3000.0)
    comparison_aggregates: tuple = ("mean", "median")
    # sample weights
    lds: bool = False
    lds_bins: int = 700
    lds_kernel: int = 7
    lds_sigma: float = 2.0
    # model
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
    max_bins: int = 256
    min_data_in_leaf: int = 1
    # search and evaluation
    search_trials: int = 0
    search_space: str = "desk"
    folds: int = 7
    repeats: int = 1
    theta: float = 6.0
    bins: tuple = (0.0, 0.5, 0.7, 0.8, 0.9, 1.0)
    seed: int = 0
    threads: int = 0  # 0 = machine parallelism
    # synthetic data
    synth_cities: int = 6
    synth_sites: int = 100
    synth_test_cities: int = 2
    synth_pitch: float = 400.0

    def path(self, key: str) -> Path:
        p = Path(getattr(self, key))
        return p if p.is_absolute() else Path(self.workdir) / p

    @property
    def n_threads(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)

    def train_config(self) -> TrainConfig:
        values = {k: getattr(self, k) for k in _TRAIN_KEYS if k != "seed"}
        return TrainConfig(seed=self.seed, **values)

    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(scene_radii=tuple(float(r) for r in self.scene_radii),
                             comparison_aggregates=tuple(self.comparison_aggregates))

    def lds_config(self) -> LdsConfig:
        return LdsConfig(n_bins=self.lds_bins, kernel_length=self.lds_kernel, sigma=self.lds_sigma)

    def target_bins(self) -> TargetBins:
        return TargetBins(tuple(float(b) for b in self.bins))

    def synth_config(self) -> SynthConfig:
        return SynthConfig(n_cities=self.synth_cities, sites_per_city=self.synth_sites,
                           n_test_cities=self.synth_test_cities, pitch_m=self.synth_pitch, seed=self.seed)

    def to_text(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if isinstance(v, tuple):
                v = ",".join(_fmt(e) for e in v)
            lines.append(f"{k}={_fmt(v)}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _convert(key: str, raw, default):
    if not isinstance(raw, str):
        return raw
    try:
        if key == "early_stopping_rounds":
            return None if raw.lower() in ("", "none") else int(raw)
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            return tuple(float(s) for s in items) if default and isinstance(default[0], float) else tuple(items)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def resolve_config(file_values: dict | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults, then config-file values, then overrides (flags win)."""
    base = PipelineConfig()
    merged = {}
    for source in (file_values or {}, {k: v for k, v in (overrides or {}).items() if v is not None}):
        for k, v in source.items():
            if not hasattr(base, k):
                raise ConfigError(f"unknown config key {k!r}")
            merged[k] = _convert(k, v, getattr(base, k))
    cfg = PipelineConfig(**{**asdict(base), **merged})
    if cfg.x not in DEFAULT_BIN_EDGES:
        raise ConfigError(f"x must be a throughput bin edge, one of {DEFAULT_BIN_EDGES}")
    if cfg.search_space not in SEARCH_SPACES:
        raise ConfigError(f"search_space must be one of {sorted(SEARCH_SPACES)}")
    try:
        cfg.train_config()
        cfg.feature_config()
        cfg.lds_config()
        cfg.target_bins()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config_file(path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# stages

def _require(cfg: PipelineConfig, *keys: str) -> None:
    for k in keys:
        if not cfg.path(k).exists():
            raise StageError(f"missing input {k}: {cfg.path(k)}")


def load_dataset(cfg: PipelineConfig) -> Dataset:
    """Parse cells with their split manifest and apply the PRB eligibility filter."""
    _require(cfg, "cells", "splits")
    splits = parse_split_manifest(cfg.path("splits"))
    return filter_eligible(parse_cells(cfg.path("cells"), splits), cfg.prb_threshold)


def run_synth(cfg: PipelineConfig) -> dict:
    Path(cfg.workdir).mkdir(parents=True, exist_ok=True)
    paths = generate_to(cfg.synth_config(), cfg.workdir)
    return {k: str(v) for k, v in paths.items()}


def run_ingest(cfg: PipelineConfig) -> dict:
    ds = load_dataset(cfg)
    write_cells(ds.universe, cfg.path("cells_clean"))
    counts = {"cells": len(ds.universe), "eligible": len(ds)}
    for split in ("train", "test"):
        counts[f"eligible_{split}"] = len(ds.subset(split))
    return counts


def run_kpi(cfg: PipelineConfig) -> dict:
    _require(cfg, "throughput", "slots")
    dists = read_throughput_table(cfg.path("throughput"), DEFAULT_BIN_EDGES)
    slots = read_slots_table(cfg.path("slots"))
    result = kpi_batch(sorted(set(dists) | set(slots)), dists, slots, cfg.x)
    write_kpi_table(result, cfg.path("kpi"), cfg.path("kpi_excluded"))
    return {"computed": len(result.values), "excluded": len(result.excluded)}


def run_neighbors(cfg: PipelineConfig) -> dict:
    """Plot-data export: one row per (cell, neighbor) pair with the interference verdict."""
    ds = load_dataset(cfg)
    contexts, layouts = compute_neighborhoods(ds, cfg.feature_config().bucket_size, cfg.n_threads)
    n_rows = 0
    with open(cfg.path("neighbors"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", "neighbor", "distance_m", "bearing_deg", "is_interferer", "rule"])
        for rec in ds.records:
            ctx = contexts[rec.cell_name]
            names = layouts[rec.city_operator].names
            for j, d, b, r in zip(ctx.neighbors, ctx.distances, ctx.bearings, ctx.rules):
                w.writerow([rec.cell_name, names[j], f"{d:.3f}", f"{b:.3f}", int(r > 0), RULE_TAGS.get(int(r), "")])
                n_rows += 1
    return {"cells": len(ds), "pairs": n_rows}


def run_features(cfg: PipelineConfig) -> dict:
    _require(cfg, "kpi")
    ds = load_dataset(cfg)
    kpi_map = read_kpi_table(cfg.path("kpi"))
    landuse = read_grid_dir(cfg.path("landuse"))
    matrix, _ = assemble_matrix(ds, kpi_map, landuse, cfg.feature_config(), cfg.n_threads)
    matrix.to_csv(cfg.path("features"))
    return {"rows": len(matrix), "columns": matrix.width}


def _split_keys(cfg: PipelineConfig, matrix: FeatureMatrix) -> dict[str, list[str]]:
    ds = load_dataset(cfg)
    split_of = {r.cell_name: ds.split_of(r) for r in ds.records}
    out: dict[str, list[str]] = {"train": [], "test": []}
    for k in matrix.keys:
        s = split_of.get(k)
        if s in out:
            out[s].append(k)
    return out


def run_weights(cfg: PipelineConfig) -> dict:
    _require(cfg, "features", "kpi")
    matrix = FeatureMatrix.from_csv(cfg.path("features"))
    kpi_map = read_kpi_table(cfg.path("kpi"))
    train = _split_keys(cfg, matrix)["train"]
    if not train:
        raise StageError("no training rows")
    w = lds_weights([kpi_map[k] for k in train], cfg.lds_config())
    write_weights(train, w, cfg.path("weights"))
    return {"rows": len(train), "min": float(w.min()), "max": float(w.max())}


def _train_weights(cfg: PipelineConfig, keys: list[str]) -> np.ndarray | None:
    if not cfg.lds:
        return None
    _require(cfg, "weights")
    table = read_weights(cfg.path("weights"))
    try:
        return np.array([table[k] for k in keys], dtype=float)
    except KeyError as exc:
        raise StageError(f"no weight for training cell {exc.args[0]}") from None


def run_train(cfg: PipelineConfig) -> dict:
    _require(cfg, "features", "kpi")
    matrix = FeatureMatrix.from_csv(cfg.path("features"))
    kpi_map = read_kpi_table(cfg.path("kpi"))
    train = _split_keys(cfg, matrix)["train"]
    if not train:
        raise StageError("no training rows")
    tm = matrix.take(train)
    y = np.array([kpi_map[k] for k in train], dtype=float)
    w = _train_weights(cfg, train)
    encoder = TargetEncoder().fit(tm, y)
    X = encoder.transform(tm)

    config = cfg.train_config()
    summary: dict = {"train_rows": len(train)}
    if cfg.search_trials > 0:
        fold_sets = repeated_folds(y, cfg.folds, cfg.repeats, cfg.target_bins(), cfg.seed)
        result = random_search(SEARCH_SPACES[cfg.search_space], cfg.search_trials, X.data, y, w,
                               fold_sets=fold_sets, base=config, seed=cfg.seed, threads=cfg.n_threads)
        result.write_log(cfg.path("trials"))
        config = result.best_config
        summary["search_best_mape"] = result.best_trial.score
    logger.info("training with %s", config)
    model = fit(X, y, w, config)
    model.save(cfg.path("model"))
    cfg.path("encoder").write_text(json.dumps(encoder.to_dict(), sort_keys=True), encoding="utf-8")
    summary["trees"] = model.n_trees
    summary["train_loss"] = model.train_trace[-1] if model.train_trace else None
    return summary


def run_evaluate(cfg: PipelineConfig) -> dict:
    _require(cfg, "features", "kpi", "model", "encoder")
    matrix = FeatureMatrix.from_csv(cfg.path("features"))
    kpi_map = read_kpi_table(cfg.path("kpi"))
    model = Ensemble.load(cfg.path("model"))
    encoder = TargetEncoder.from_dict(json.loads(cfg.path("encoder").read_text(encoding="utf-8")))
    # targets are shares, so predictions are clipped to [0, 1]
    pred = np.clip(model.predict(encoder.transform(matrix)), 0.0, 1.0)
    preds = dict(zip(matrix.keys, pred.tolist()))
    ds = load_dataset(cfg)
    split_of = {r.cell_name: ds.split_of(r) for r in ds.records}
    with open(cfg.path("predictions"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_name", "split", "y", "y_hat"])
        for k in matrix.keys:
            w.writerow([k, split_of.get(k) or "", repr(kpi_map[k]), repr(preds[k])])
    rep = report(ds, kpi_map, preds, cfg.theta, cfg.target_bins())
    rep.write(cfg.path("report"))

    keys = _split_keys(cfg, matrix)
    summary: dict = {}
    if keys["train"] and keys["test"]:
        base = baseline_predictions([kpi_map[k] for k in keys["train"]], _train_weights(cfg, keys["train"]),
                                    keys["test"])
        yt = np.array([kpi_map[k] for k in keys["test"]])
        bt = np.array([base[k] for k in keys["test"]])
        summary["baseline_test_mape"] = mape(yt, bt)
        summary["baseline_test_p_theta"] = coverage(yt, bt, cfg.theta)
    for r in rep.rows:
        if r.scope.startswith("combined_"):
            summary[f"{r.scope}_mape"] = r.mape
            summary[f"{r.scope}_p_theta"] = r.p_theta
    return summary


STAGES = {
    "synth": run_synth,
    "ingest": run_ingest,
    "kpi": run_kpi,
    "neighbors": run_neighbors,
    "features": run_features,
    "weights": run_weights,
    "train": run_train,
    "evaluate": run_evaluate,
}
PIPELINE_ORDER = ("ingest", "kpi", "neighbors", "features", "weights", "train", "evaluate")


def run_pipeline(cfg: PipelineConfig) -> dict:
    out = {}
    for name in PIPELINE_ORDER:
        logger.info("stage %s", name)
        out[name] = STAGES[name](cfg)
    return out


STAGES["pipeline"] = run_pipeline
