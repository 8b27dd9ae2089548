"""File-based land-use grids and disc sampling around cells.

Grid file layout (text)::

    origin_x,origin_y,cell_size_m,n_rows,n_cols
    <origin_lon>,<origin_lat>,<cell size>,<rows>,<cols>
    <n_rows lines of n_cols integer category codes, comma separated>

The origin is the longitude/latitude of the grid's south-west corner. Rows
run south to north and columns west to east, each ``cell_size_m`` wide in
the equirectangular frame anchored at the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .spatial import project

CATEGORIES = ("urban", "water", "forest_scrub", "open", "other")
N_CATEGORIES = len(CATEGORIES)
GRID_SUFFIX = ".grid"


class LandUseError(ValueError):
    pass


@dataclass(frozen=True)
class LandUseGrid:
    origin_lon: float
    origin_lat: float
    cell_size: float
    codes: np.ndarray  # (n_rows, n_cols) ints in [0, N_CATEGORIES)

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int8)
        if codes.ndim != 2 or codes.size == 0:
            raise LandUseError("grid must be a non-empty 2-D array")
        if codes.min() < 0 or codes.max() >= N_CATEGORIES:
            raise LandUseError("category code out of range")
        if self.cell_size <= 0:
            raise LandUseError("cell_size must be positive")
        object.__setattr__(self, "codes", codes)

    @property
    def shape(self) -> tuple[int, int]:
        return self.codes.shape

    def to_local(self, longitude: float, latitude: float) -> tuple[float, float]:
        p = project(longitude, latitude, self.origin_lon, self.origin_lat)
        return p.x, p.y

    def contains(self, x: float, y: float) -> bool:
        rows, cols = self.shape
        return 0.0 <= x < cols * self.cell_size and 0.0 <= y < rows * self.cell_size


@lru_cache(maxsize=32)
def disc_offsets(radius: float, cell_size: float) -> tuple[np.ndarray, np.ndarray]:
    """Row/column offsets (relative to the point's own grid cell) that may fall in the disc."""
    k = math.ceil(radius / cell_size) + 1
    r = np.arange(-k, k + 1)
    dr, dc = np.meshgrid(r, r, indexing="ij")
    return dr.ravel(), dc.ravel()


def category_shares(grid: LandUseGrid, x: float, y: float, radius: float) -> np.ndarray | None:
    """Share of each category among grid cells whose centers lie within ``radius``.

    Only in-bounds grid cells are sampled. Returns None when the point lies
    outside the grid.
    """
    if not grid.contains(x, y):
        return None
    s = grid.cell_size
    rows, cols = grid.shape
    r0, c0 = int(y // s), int(x // s)
    dr, dc = disc_offsets(radius, s)
    rr, cc = r0 + dr, c0 + dc
    cy = (rr + 0.5) * s - y
    cx = (cc + 0.5) * s - x
    keep = (rr >= 0) & (rr < rows) & (cc >= 0) & (cc < cols) & (cx * cx + cy * cy <= radius * radius)
    if not keep.any():
        # radius smaller than half a grid cell: fall back to the cell under the point
        counts = np.zeros(N_CATEGORIES)
        counts[grid.codes[r0, c0]] = 1.0
        return counts
    counts = np.bincount(grid.codes[rr[keep], cc[keep]], minlength=N_CATEGORIES).astype(float)
    return counts / counts.sum()


def scene_moments(grid: LandUseGrid | None, longitude: float, latitude: float,
                  radii: tuple[float, ...]) -> np.ndarray | None:
    """Per radius and category, the mean and variance of the category indicator.

    Shape ``(len(radii), N_CATEGORIES, 2)``; None if the cell is off-grid.
    """
    if grid is None:
        return None
    x, y = grid.to_local(longitude, latitude)
    out = np.empty((len(radii), N_CATEGORIES, 2))
    for k, radius in enumerate(radii):
        share = category_shares(grid, x, y, radius)
        if share is None:
            return None
        out[k, :, 0] = share
        out[k, :, 1] = share * (1.0 - share)
    return out


def write_grid(grid: LandUseGrid, path) -> None:
    rows, cols = grid.shape
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("origin_x,origin_y,cell_size_m,n_rows,n_cols\n")
        fh.write(f"{grid.origin_lon!r},{grid.origin_lat!r},{grid.cell_size!r},{rows},{cols}\n")
        for row in grid.codes:
            fh.write(",".join(str(int(v)) for v in row))
            fh.write("\n")


def read_grid(path) -> LandUseGrid:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header != ["origin_x", "origin_y", "cell_size_m", "n_rows", "n_cols"]:
            raise LandUseError(f"{path}: bad header {header}")
        ox, oy, size, rows, cols = fh.readline().strip().split(",")
        n_rows, n_cols = int(rows), int(cols)
        codes = np.loadtxt(fh, delimiter=",", dtype=np.int64, ndmin=2)
    if codes.shape != (n_rows, n_cols):
        raise LandUseError(f"{path}: expected {n_rows}x{n_cols} codes, got {codes.shape}")
    return LandUseGrid(float(ox), float(oy), float(size), codes)


def read_grid_dir(directory) -> dict[str, LandUseGrid]:
    """Load ``<city>.grid`` files from a directory, keyed by city."""
    d = Path(directory)
    if not d.is_dir():
        return {}
    return {p.name[: -len(GRID_SUFFIX)]: read_grid(p) for p in sorted(d.glob(f"*{GRID_SUFFIX}"))}
