"""Synthetic multi-city cell datasets for desk-scale runs.

The generative story is invented and non-physical. Each cell gets a latent
quality q in [0, 1] driven by observable quantities (spectrum and antenna
capacity, PRB load, local cell density, urban land use and mast height).
q sets the share of downlink volume carried above 100 Mbps, and load sets the
busy-slot share of downlink time, so the resulting KPI is learnable from
the engineered features.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data_model import CellRecord, DuplexMode, write_cells, write_split_manifest
from .kpi import DEFAULT_BIN_EDGES, DEFAULT_X, ThroughputDistribution, TimeSlotSeries
from .landuse import GRID_SUFFIX, LandUseGrid, category_shares, write_grid
from .spatial import METERS_PER_DEGREE, PlanarPoint, SpatialIndex

CELLS_FILE = "cells.csv"
THROUGHPUT_FILE = "throughput.csv"
SLOTS_FILE = "slots.csv"
SPLITS_FILE = "splits.csv"
LANDUSE_DIR = "landuse"

# (band, duplex, narfcn, bandwidth MHz, subframe assignment, special pattern)
CARRIERS = (
    ("n78", "TDD", 630000, 100.0, "DDDSU", "10:2:2"),
    ("n78", "TDD", 633984, 60.0, "DDDSU", "10:2:2"),
    ("n41", "TDD", 504990, 100.0, "DDDDDDDSUU", "6:4:4"),
    ("n1", "FDD", 428000, 20.0, "NA", "NA"),
    ("n28", "FDD", 152600, 20.0, "NA", "NA"),
)
TXRX_MODES = ("2T2R", "4T4R", "8T8R", "32T32R", "64T64R")
N_SLOTS = 8


@dataclass(frozen=True)
class SynthConfig:
    n_cities: int = 6
    operators_per_city: int = 2
    sites_per_city: int = 100  # per operator
    sectors_per_site: int = 3
    pitch_m: float = 400.0
    n_test_cities: int = 2
    seed: int = 0
    # latent quality model
    w_capacity: float = 1.3
    w_load: float = 1.1
    w_density: float = 0.6
    w_urban: float = 0.8
    w_height: float = 0.3
    q_bias: float = 0.9
    q_noise: float = 0.25
    kpi_noise: float = 0.02
    zero_traffic_rate: float = 0.004
    grid_cell_m: float = 100.0
    grid_margin_m: float = 3500.0

    def __post_init__(self):
        for name in ("n_cities", "operators_per_city", "sites_per_city", "sectors_per_site"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 <= self.n_test_cities <= self.n_cities:
            raise ValueError("n_test_cities must lie in [0, n_cities]")
        if self.pitch_m <= 0 or self.grid_cell_m <= 0:
            raise ValueError("pitch_m and grid_cell_m must be positive")


@dataclass
class SynthData:
    records: list[CellRecord]
    throughput: dict[str, ThroughputDistribution]
    slots: dict[str, TimeSlotSeries]
    landuse: dict[str, LandUseGrid]
    splits: dict[tuple[str, str], str]
    quality: dict[str, float] = field(default_factory=dict)


def _sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))


def _zscore(v: np.ndarray) -> np.ndarray:
    s = v.std()
    return (v - v.mean()) / s if s > 0 else np.zeros_like(v)


def _city_name(i: int) -> str:
    return f"city{i + 1:02d}"


def _operator_name(i: int) -> str:
    return f"op{chr(ord('A') + i)}"


def _landuse_grid(rng: np.random.Generator, half_extent: float, cell: float,
                  origin_lon: float, origin_lat: float) -> LandUseGrid:
    n = int(math.ceil(2 * half_extent / cell))
    # coarse noise upsampled by block repetition, so patches are a few cells wide
    block = 8
    m = n // block + 1

    def field_():
        return np.kron(rng.random((m, m)), np.ones((block, block)))[:n, :n]

    centers = (np.arange(n) + 0.5) * cell - half_extent
    cx, cy = np.meshgrid(centers, centers)
    radial = np.exp(-(cx * cx + cy * cy) / (2 * (0.45 * half_extent) ** 2))
    urban = radial + 0.35 * field_()
    water = field_()
    green = field_()
    codes = np.full((n, n), 4, dtype=np.int64)  # other
    codes[green > 0.55] = 3  # open
    codes[green > 0.8] = 2  # forest/scrub
    codes[water > 0.93] = 1  # water
    codes[urban > 0.75] = 0  # urban
    return LandUseGrid(origin_lon, origin_lat, cell, codes)


def _site_positions(rng: np.random.Generator, n_sites: int, pitch: float, offset: float) -> np.ndarray:
    side = int(math.ceil(math.sqrt(n_sites)))
    idx = np.arange(n_sites)
    gx = (idx % side - (side - 1) / 2) * pitch + offset
    gy = (idx // side - (side - 1) / 2) * pitch + offset
    jitter = rng.uniform(-0.3, 0.3, size=(2, n_sites)) * pitch
    return np.stack([gx + jitter[0], gy + jitter[1]], axis=1)


def _round(v: float, nd: int = 6) -> float:
    return float(round(float(v), nd))


def generate(config: SynthConfig = SynthConfig()) -> SynthData:
    rng = np.random.default_rng(config.seed)
    edges = DEFAULT_BIN_EDGES
    n_below = edges.index(DEFAULT_X)
    n_bins = len(edges) - 1

    records: list[CellRecord] = []
    throughput: dict[str, ThroughputDistribution] = {}
    slots: dict[str, TimeSlotSeries] = {}
    landuse: dict[str, LandUseGrid] = {}
    splits: dict[tuple[str, str], str] = {}
    quality: dict[str, float] = {}

    test_cities = set(rng.choice(config.n_cities, size=config.n_test_cities, replace=False).tolist())

    for c in range(config.n_cities):
        city = _city_name(c)
        lon0 = 26.0 + 1.1 * c
        lat0 = 37.0 + 0.8 * (c % 4)
        pitch = config.pitch_m * rng.uniform(0.7, 1.4)
        side = int(math.ceil(math.sqrt(config.sites_per_city)))
        half_extent = side * pitch / 2 + pitch + config.grid_margin_m
        k_lon = METERS_PER_DEGREE * math.cos(math.radians(lat0))
        origin_lon = lon0 - half_extent / k_lon
        origin_lat = lat0 - half_extent / METERS_PER_DEGREE
        grid = _landuse_grid(rng, half_extent, config.grid_cell_m, origin_lon, origin_lat)
        landuse[city] = grid
        city_load = rng.uniform(-0.5, 0.5)

        for o in range(config.operators_per_city):
            operator = _operator_name(o)
            splits[(city, operator)] = "test" if c in test_cities else "train"
            sites = _site_positions(rng, config.sites_per_city, pitch, offset=0.5 * pitch * (o % 2))
            n_cells = config.sites_per_city * config.sectors_per_site
            site_of = np.repeat(np.arange(config.sites_per_city), config.sectors_per_site)
            sector = np.tile(np.arange(config.sectors_per_site), config.sites_per_city)
            base_az = rng.uniform(0, 360, size=config.sites_per_city)[site_of]
            az = np.mod(base_az + sector * 360.0 / config.sectors_per_site + rng.normal(0, 5, n_cells), 360.0)
            xy = sites[site_of]
            # sectors sit a few meters apart on the mast
            x = xy[:, 0] + 3.0 * np.sin(np.radians(az))
            y = xy[:, 1] + 3.0 * np.cos(np.radians(az))

            index = SpatialIndex(x, y)
            density = np.array([index.radius_query(PlanarPoint(x[i], y[i]), 600.0).size - 1
                                for i in range(n_cells)], dtype=float)
            lon = np.round(lon0 + x / k_lon, 7)
            lat = np.round(lat0 + y / METERS_PER_DEGREE, 7)
            urban = np.empty(n_cells)
            for i in range(n_cells):
                share = category_shares(grid, *grid.to_local(lon[i], lat[i]), 300.0)
                urban[i] = share[0] if share is not None else 0.0

            carrier = rng.integers(len(CARRIERS), size=config.sites_per_city)[site_of]
            txrx = rng.integers(len(TXRX_MODES), size=config.sites_per_city)[site_of]
            height = rng.uniform(15, 45, size=config.sites_per_city)[site_of]
            bw = np.array([CARRIERS[k][3] for k in carrier])
            ntx = np.array([int(TXRX_MODES[k].split("T")[0]) for k in txrx], dtype=float)
            capacity = np.log(bw) + 0.35 * np.log2(ntx)
            usage = np.clip(100 * _sigmoid(rng.normal(0.4 + city_load, 1.1, n_cells)), 1.0, 99.5)
            load = usage / 100.0

            q_lin = (config.q_bias
                     + config.w_capacity * _zscore(capacity)
                     - config.w_load * _zscore(load)
                     - config.w_density * _zscore(density)
                     - config.w_urban * urban
                     + config.w_height * _zscore(height)
                     + rng.normal(0, config.q_noise, n_cells))
            q = _sigmoid(1.4 * q_lin)

            prb = np.round(bw * 2.73)
            online = usage * (0.4 + 0.06 * bw) * rng.uniform(0.8, 1.2, n_cells)
            dl_conc = online * rng.uniform(0.2, 0.35, n_cells)
            ul_conc = dl_conc * rng.uniform(0.3, 0.6, n_cells)
            dl_traffic = online * (8 + 40 * q) * rng.uniform(0.8, 1.2, n_cells)
            zero = rng.random(n_cells) < config.zero_traffic_rate
            dl_traffic[zero] = 0.0
            ul_traffic = dl_traffic * rng.uniform(0.08, 0.16, n_cells)

            below_share = np.clip(1.0 - q + rng.normal(0, config.kpi_noise, n_cells), 0.0, 1.0)
            busy = np.clip(0.45 + 0.5 * load + rng.normal(0, config.kpi_noise, n_cells), 0.05, 1.0)

            for i in range(n_cells):
                s = site_of[i]
                name = f"{city}{operator}S{s:04d}_{sector[i] + 1}"
                site_id = f"{city}{operator}S{s:04d}"
                band, duplex, narfcn, bwi, subframe, special = CARRIERS[carrier[i]]
                dl = _round(dl_traffic[i], 4)
                ul = _round(ul_traffic[i], 4)
                rec = CellRecord(
                    cell_name=name, site_id=site_id, operator=operator, city=city,
                    longitude=float(lon[i]), latitude=float(lat[i]), azimuth=_round(az[i], 3),
                    height=_round(height[i], 2), duplex_mode=DuplexMode(duplex), dl_narfcn=narfcn,
                    frequency_band=band, dl_bandwidth=bwi, txrx_mode=TXRX_MODES[txrx[i]],
                    subframe_assignment=subframe, special_patterns=special,
                    dl_prb_avail=float(prb[i]), dl_prb_usage=_round(usage[i], 3), ul_prb_avail=float(prb[i]),
                    online_users=_round(online[i], 3), dl_concurrent_users=_round(dl_conc[i], 3),
                    ul_concurrent_users=_round(ul_conc[i], 3), dl_traffic=dl, ul_traffic=ul,
                    total_traffic=_round(dl + ul, 4),
                )
                records.append(rec)
                quality[name] = float(q[i])

                vols = np.zeros(n_bins)
                if dl > 0:
                    vols[:n_below] = rng.dirichlet(np.full(n_below, 2.0)) * below_share[i] * dl
                    vols[n_below:] = rng.dirichlet(np.full(n_bins - n_below, 2.0)) * (1 - below_share[i]) * dl
                throughput[name] = ThroughputDistribution(np.round(vols, 6), edges)
                total_time = 3600.0 * rng.uniform(0.3, 0.9)
                t = np.empty(N_SLOTS)
                t[:-1] = rng.dirichlet(np.full(N_SLOTS - 1, 2.0)) * busy[i] * total_time
                t[-1] = (1.0 - busy[i]) * total_time
                slots[name] = TimeSlotSeries(np.round(t, 6))

    return SynthData(records, throughput, slots, landuse, splits, quality)


def _write_table(path: Path, prefix: str, rows: dict[str, np.ndarray]) -> None:
    width = len(next(iter(rows.values()))) if rows else 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["cell_name"] + [f"{prefix}_{i}" for i in range(1, width + 1)]) + "\n")
        for name in sorted(rows):
            fh.write(",".join([name] + [repr(float(v)) for v in rows[name]]) + "\n")


def write(data: SynthData, out_dir) -> dict[str, Path]:
    """Write every table in its pipeline input format; returns the paths by role."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "cells": out / CELLS_FILE,
        "throughput": out / THROUGHPUT_FILE,
        "slots": out / SLOTS_FILE,
        "splits": out / SPLITS_FILE,
        "landuse": out / LANDUSE_DIR,
    }
    write_cells(data.records, paths["cells"])
    _write_table(paths["throughput"], "bin", {k: v.volumes for k, v in data.throughput.items()})
    _write_table(paths["slots"], "slot", {k: v.slot_times for k, v in data.slots.items()})
    write_split_manifest(data.splits, paths["splits"])
    paths["landuse"].mkdir(exist_ok=True)
    for city, grid in sorted(data.landuse.items()):
        write_grid(grid, paths["landuse"] / f"{city}{GRID_SUFFIX}")
    return paths


def generate_to(config: SynthConfig, out_dir) -> dict[str, Path]:
    return write(generate(config), out_dir)

