"""TMLER-X: traffic-measurement-level experience rate at throughput X.

A cell's downlink volume is histogrammed over throughput bins. The KPI is
one minus the product of two ratios: the share of volume delivered below
``x`` Mbps, and the share of downlink time spent outside the final slot
(the slot in which the buffer empties).

The default bin layout has 14 bins. The stated layout steps by 5 Mbps up to
40, then by 10, 50, 100, 300 and 500 Mbps, with an open bin above 1000 Mbps.
Some descriptions of it quote 15 bins. Pass ``bin_edges`` explicitly if you
need a different layout.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

DEFAULT_BIN_EDGES = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0,
                     50.0, 100.0, 200.0, 500.0, 1000.0, math.inf)
DEFAULT_X = 100.0


class KpiError(ValueError):
    pass


class UndefinedKpiError(KpiError):
    """Raised when a denominator of the KPI is zero."""


@dataclass(frozen=True)
class ThroughputDistribution:
    volumes: np.ndarray
    bin_edges: tuple[float, ...] = DEFAULT_BIN_EDGES

    def __post_init__(self):
        edges = tuple(float(e) for e in self.bin_edges)
        vols = np.asarray(self.volumes, dtype=float)
        if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise KpiError("bin edges must be strictly increasing")
        if vols.shape != (len(edges) - 1,):
            raise KpiError(f"expected {len(edges) - 1} volumes, got {vols.shape}")
        if not np.all(np.isfinite(vols)) or np.any(vols < 0):
            raise KpiError("volumes must be finite and non-negative")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "volumes", vols)

    @property
    def n_bins(self) -> int:
        return len(self.bin_edges) - 1


@dataclass(frozen=True)
class TimeSlotSeries:
    slot_times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.slot_times, dtype=float)
        if t.ndim != 1 or t.size < 1:
            raise KpiError("need at least one slot")
        if not np.all(np.isfinite(t)) or np.any(t < 0):
            raise KpiError("slot times must be finite and non-negative")
        object.__setattr__(self, "slot_times", t)


@dataclass(frozen=True)
class KpiValue:
    y: float
    x: float


def volume_ratio_below(dist: ThroughputDistribution, x: float) -> float:
    """Share of volume in bins whose upper edge is <= x."""
    edges = dist.bin_edges
    if x not in edges:
        raise KpiError(f"x={x} is not a bin edge; edges are {edges}")
    total = float(dist.volumes.sum())
    if total <= 0:
        raise UndefinedKpiError("zero total downlink volume")
    n_below = edges.index(x)  # bins [e_i, e_{i+1}) with e_{i+1} <= x
    return float(dist.volumes[:n_below].sum()) / total


def busy_time_ratio(slots: TimeSlotSeries) -> float:
    """Share of downlink time spent in every slot but the last."""
    total = float(slots.slot_times.sum())
    if total <= 0:
        raise UndefinedKpiError("zero total downlink time")
    return float(slots.slot_times[:-1].sum()) / total


def tmler_x(dist: ThroughputDistribution, slots: TimeSlotSeries, x: float = DEFAULT_X) -> KpiValue:
    y = 1.0 - volume_ratio_below(dist, x) * busy_time_ratio(slots)
    return KpiValue(y=min(max(y, 0.0), 1.0), x=x)


def tmler_x_curve(dist: ThroughputDistribution, slots: TimeSlotSeries) -> np.ndarray:
    """KPI evaluated at every bin edge, in edge order."""
    total = dist.volumes.sum()
    if total <= 0:
        raise UndefinedKpiError("zero total downlink volume")
    cum = np.concatenate(([0.0], np.cumsum(dist.volumes)))
    return np.clip(1.0 - (cum / total) * busy_time_ratio(slots), 0.0, 1.0)


@dataclass
class KpiBatchResult:
    values: dict[str, KpiValue]
    excluded: dict[str, str]


def kpi_batch(
    cells: Sequence[str],
    distributions: Mapping[str, ThroughputDistribution],
    slot_series: Mapping[str, TimeSlotSeries],
    x: float = DEFAULT_X,
) -> KpiBatchResult:
    """Evaluate the KPI per cell, collecting per-cell failures instead of raising."""
    values: dict[str, KpiValue] = {}
    excluded: dict[str, str] = {}
    for name in sorted(cells):
        dist = distributions.get(name)
        slots = slot_series.get(name)
        if dist is None or slots is None:
            excluded[name] = "missing throughput or slot data"
            continue
        try:
            values[name] = tmler_x(dist, slots, x)
        except KpiError as exc:
            excluded[name] = str(exc)
    return KpiBatchResult(values, excluded)


def _read_numeric_table(path, prefix: str) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "cell_name":
            raise KpiError(f"{path}: first column must be cell_name")
        for i, name in enumerate(header[1:], start=1):
            if name != f"{prefix}_{i}":
                raise KpiError(f"{path}: expected column {prefix}_{i}, got {name!r}")
        width = len(header)
        out: dict[str, np.ndarray] = {}
        for lineno, row in enumerate(reader):
            if len(row) != width:
                raise KpiError(f"{path}: row {lineno} has {len(row)} fields, expected {width}")
            try:
                out[row[0]] = np.array([float(v) for v in row[1:]])
            except ValueError:
                raise KpiError(f"{path}: row {lineno} has an unparsable number") from None
    return out


def read_throughput_table(path, bin_edges: Sequence[float] = DEFAULT_BIN_EDGES) -> dict[str, ThroughputDistribution]:
    return {
        name: ThroughputDistribution(vols, tuple(bin_edges))
        for name, vols in _read_numeric_table(path, "bin").items()
    }


def read_slots_table(path) -> dict[str, TimeSlotSeries]:
    return {name: TimeSlotSeries(t) for name, t in _read_numeric_table(path, "slot").items()}


def write_kpi_table(result: KpiBatchResult, path, excluded_path=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_name", "x", "y"])
        for name in sorted(result.values):
            v = result.values[name]
            w.writerow([name, repr(v.x), repr(v.y)])
    if excluded_path is not None:
        with open(excluded_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cell_name", "reason"])
            for name in sorted(result.excluded):
                w.writerow([name, result.excluded[name]])


def read_kpi_table(path: str | Path) -> dict[str, float]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["cell_name"]: float(row["y"]) for row in csv.DictReader(fh)}
