"""Planar geometry for cells: projection, bearings, the oriented neighborhood
square, the interference rules and a grid bucket index.

Angles are compass degrees (clockwise from north). Planar frames are local
equirectangular projections in meters, x east and y north.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

METERS_PER_DEGREE = 111_320.0

BOX_OFFSET_M = 500.0
BOX_CORNER_DISTANCE_M = 1200.0
BOX_HALF_SIDE_M = BOX_CORNER_DISTANCE_M / math.sqrt(2.0)
# slack on the inclusive box boundary, so points on edges and corners survive rounding
BOX_TOLERANCE_M = 1e-6

SAME_SITE_MAX_AZIMUTH_DIFF = 100.0
CLOSE_RANGE_M = 150.0
FOV_RANGE_M = 1000.0
FOV_HALF_ANGLE = 60.0

RULE_SAME_SITE = 1
RULE_CLOSE_RANGE = 2
RULE_MUTUAL_FOV = 3
RULE_TAGS = {RULE_SAME_SITE: "R1", RULE_CLOSE_RANGE: "R2", RULE_MUTUAL_FOV: "R3"}

DEFAULT_BUCKET_SIZE = 300.0


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class PlanarPoint:
    x: float
    y: float


def project(longitude, latitude, origin_lon: float, origin_lat: float):
    """Equirectangular projection about an origin; scalars give a PlanarPoint."""
    k = METERS_PER_DEGREE
    x = (np.asarray(longitude, dtype=float) - origin_lon) * math.cos(math.radians(origin_lat)) * k
    y = (np.asarray(latitude, dtype=float) - origin_lat) * k
    if x.ndim == 0:
        return PlanarPoint(float(x), float(y))
    return x, y


def circular_diff(a, b):
    """Smallest absolute angle between two compass directions, in [0, 180]."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 360.0
    out = np.minimum(d, 360.0 - d)
    return float(out) if out.ndim == 0 else out


def _compass(dx, dy):
    deg = np.degrees(np.arctan2(dx, dy)) % 360.0
    return np.where(deg >= 360.0, 0.0, deg)


def bearing(frm: PlanarPoint, to: PlanarPoint) -> float:
    dx, dy = to.x - frm.x, to.y - frm.y
    if dx == 0.0 and dy == 0.0:
        raise GeometryError("bearing between coincident points is undefined")
    return float(_compass(dx, dy))


def back_bearing(b: float) -> float:
    return (b + 180.0) % 360.0


@dataclass(frozen=True)
class OrientedSquare:
    center: PlanarPoint
    half_side: float
    rotation: float

    def corners(self) -> list[PlanarPoint]:
        """Corners at rotation + 315, 45, 135, 225 degrees from the center."""
        dist = self.half_side * math.sqrt(2.0)
        out = []
        for offset in (315.0, 45.0, 135.0, 225.0):
            a = math.radians((self.rotation + offset) % 360.0)
            out.append(PlanarPoint(self.center.x + dist * math.sin(a), self.center.y + dist * math.cos(a)))
        return out

    def contains(self, p: PlanarPoint) -> bool:
        # rotate by -rotation about the center, then axis-aligned test
        t = math.radians(self.rotation)
        dx, dy = p.x - self.center.x, p.y - self.center.y
        u = dx * math.cos(t) - dy * math.sin(t)
        v = dx * math.sin(t) + dy * math.cos(t)
        limit = self.half_side + BOX_TOLERANCE_M
        return abs(u) <= limit and abs(v) <= limit


def neighbor_box(position: PlanarPoint, azimuth: float) -> OrientedSquare:
    a = math.radians(azimuth)
    center = PlanarPoint(position.x + BOX_OFFSET_M * math.sin(a), position.y + BOX_OFFSET_M * math.cos(a))
    return OrientedSquare(center, BOX_HALF_SIDE_M, azimuth % 360.0)


@dataclass(frozen=True)
class CellLayout:
    """Planar positions and identity codes of a cell universe, as parallel arrays."""

    names: tuple[str, ...]
    x: np.ndarray
    y: np.ndarray
    azimuth: np.ndarray
    operator: np.ndarray
    site: np.ndarray

    def __len__(self) -> int:
        return len(self.names)

    def point(self, i: int) -> PlanarPoint:
        return PlanarPoint(float(self.x[i]), float(self.y[i]))

    @classmethod
    def from_arrays(cls, names, x, y, azimuth, operator, site) -> "CellLayout":
        return cls(
            tuple(names),
            np.asarray(x, dtype=float),
            np.asarray(y, dtype=float),
            np.asarray(azimuth, dtype=float) % 360.0,
            _codes(operator),
            _codes(site),
        )

    @classmethod
    def from_records(cls, records: Sequence, origin: tuple[float, float] | None = None) -> "CellLayout":
        """Project records about ``origin`` (lon, lat); defaults to their centroid."""
        lon = np.array([r.longitude for r in records], dtype=float)
        lat = np.array([r.latitude for r in records], dtype=float)
        if origin is None:
            origin = (float(lon.mean()), float(lat.mean())) if len(records) else (0.0, 0.0)
        x, y = project(lon, lat, *origin) if len(records) else (lon, lat)
        return cls.from_arrays(
            [r.cell_name for r in records],
            x,
            y,
            [r.azimuth for r in records],
            [r.operator for r in records],
            [r.site_id for r in records],
        )


def _codes(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype.kind in "iu":
        return arr.astype(np.int64)
    _, inverse = np.unique(arr.astype(str), return_inverse=True)
    return inverse.astype(np.int64)


class SpatialIndex:
    """Uniform grid buckets over planar points, keyed by (floor(x/s), floor(y/s)).

    Buckets are stored contiguously, sorted by key, so a rectangular query
    is one slice per bucket column. Immutable after construction.
    """

    def __init__(self, x, y, bucket_size: float = DEFAULT_BUCKET_SIZE):
        if bucket_size <= 0:
            raise ValueError("bucket_size must be positive")
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.bucket_size = float(bucket_size)
        ix = np.floor(self.x / bucket_size).astype(np.int64)
        iy = np.floor(self.y / bucket_size).astype(np.int64)
        self._iy_min = int(iy.min()) if iy.size else 0
        self._span = (int(iy.max()) - self._iy_min + 1) if iy.size else 1
        keys = ix * self._span + (iy - self._iy_min)
        self._order = np.argsort(keys, kind="stable")
        self._keys = keys[self._order]
        self._ix_range = (int(ix.min()), int(ix.max())) if ix.size else (0, -1)

    def __len__(self) -> int:
        return self.x.size

    def buckets(self) -> dict[tuple[int, int], np.ndarray]:
        out: dict[tuple[int, int], np.ndarray] = {}
        keys, starts = np.unique(self._keys, return_index=True)
        ends = np.append(starts[1:], self._keys.size)
        for k, s, e in zip(keys, starts, ends):
            ix, iy = divmod(int(k), self._span)
            out[(ix, iy + self._iy_min)] = np.sort(self._order[s:e])
        return out

    def rect_candidates(self, xmin: float, xmax: float, ymin: float, ymax: float) -> np.ndarray:
        """Indices of all points in buckets overlapping the rectangle (a superset)."""
        s = self.bucket_size
        ix0 = max(math.floor(xmin / s), self._ix_range[0])
        ix1 = min(math.floor(xmax / s), self._ix_range[1])
        iy0 = max(math.floor(ymin / s) - self._iy_min, 0)
        iy1 = min(math.floor(ymax / s) - self._iy_min, self._span - 1)
        if ix0 > ix1 or iy0 > iy1:
            return np.empty(0, dtype=np.int64)
        cols = np.arange(ix0, ix1 + 1, dtype=np.int64) * self._span
        lo = np.searchsorted(self._keys, cols + iy0, side="left")
        hi = np.searchsorted(self._keys, cols + iy1, side="right")
        parts = [self._order[a:b] for a, b in zip(lo, hi) if b > a]
        if not parts:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(parts)

    def radius_query(self, point: PlanarPoint, r: float) -> np.ndarray:
        """Sorted indices of points within distance ``r`` (inclusive)."""
        cand = self.rect_candidates(point.x - r, point.x + r, point.y - r, point.y + r)
        d2 = (self.x[cand] - point.x) ** 2 + (self.y[cand] - point.y) ** 2
        return np.sort(cand[d2 <= r * r])


def build_index(layout: CellLayout, bucket_size: float = DEFAULT_BUCKET_SIZE) -> SpatialIndex:
    return SpatialIndex(layout.x, layout.y, bucket_size)


def radius_query(index: SpatialIndex, point: PlanarPoint, r: float) -> np.ndarray:
    return index.radius_query(point, r)


def _in_box(layout: CellLayout, i: int, cand: np.ndarray) -> np.ndarray:
    a = math.radians(layout.azimuth[i])
    sa, ca = math.sin(a), math.cos(a)
    cx = layout.x[i] + BOX_OFFSET_M * sa
    cy = layout.y[i] + BOX_OFFSET_M * ca
    dx = layout.x[cand] - cx
    dy = layout.y[cand] - cy
    forward = dx * sa + dy * ca
    lateral = dx * ca - dy * sa
    limit = BOX_HALF_SIDE_M + BOX_TOLERANCE_M
    return (np.abs(forward) <= limit) & (np.abs(lateral) <= limit)


def neighbors(i: int, layout: CellLayout, index: SpatialIndex) -> np.ndarray:
    """Sorted indices of same-operator cells inside cell ``i``'s oriented square."""
    box = neighbor_box(layout.point(i), float(layout.azimuth[i]))
    xs = [c.x for c in box.corners()]
    ys = [c.y for c in box.corners()]
    tol = BOX_TOLERANCE_M
    cand = index.rect_candidates(min(xs) - tol, max(xs) + tol, min(ys) - tol, max(ys) + tol)
    cand = cand[(layout.operator[cand] == layout.operator[i]) & (cand != i)]
    return np.sort(cand[_in_box(layout, i, cand)])


def classify_interferers(i: int, nbrs: np.ndarray, layout: CellLayout) -> tuple[np.ndarray, np.ndarray]:
    """Rule code (0 = none, else 1/2/3) and distance for each neighbor of cell ``i``."""
    dx = layout.x[nbrs] - layout.x[i]
    dy = layout.y[nbrs] - layout.y[i]
    dist = np.hypot(dx, dy)
    same_site = layout.site[nbrs] == layout.site[i]
    rule = np.zeros(nbrs.size, dtype=np.int8)

    r1 = same_site & (circular_diff(layout.azimuth[nbrs], layout.azimuth[i]) <= SAME_SITE_MAX_AZIMUTH_DIFF)
    r2 = ~same_site & (dist <= CLOSE_RANGE_M)
    fwd = _compass(dx, dy)
    back = (fwd + 180.0) % 360.0
    r3 = (
        (dist > CLOSE_RANGE_M)
        & (dist <= FOV_RANGE_M)
        & (circular_diff(fwd, layout.azimuth[i]) <= FOV_HALF_ANGLE)
        & (circular_diff(back, layout.azimuth[nbrs]) <= FOV_HALF_ANGLE)
    )
    rule[r3] = RULE_MUTUAL_FOV
    rule[r2] = RULE_CLOSE_RANGE
    rule[r1] = RULE_SAME_SITE
    return rule, dist


def interferers(i: int, nbrs: np.ndarray, layout: CellLayout) -> np.ndarray:
    rule, _ = classify_interferers(i, nbrs, layout)
    return nbrs[rule > 0]


@dataclass(frozen=True)
class CellContext:
    """Neighborhood of one cell: neighbor indices with distances, bearings and rule codes."""

    index: int
    neighbors: np.ndarray
    distances: np.ndarray
    bearings: np.ndarray
    rules: np.ndarray

    @property
    def interferers(self) -> np.ndarray:
        return self.neighbors[self.rules > 0]

    @property
    def interferer_distances(self) -> np.ndarray:
        return self.distances[self.rules > 0]


def cell_context(i: int, layout: CellLayout, index: SpatialIndex) -> CellContext:
    nbrs = neighbors(i, layout, index)
    rule, dist = classify_interferers(i, nbrs, layout)
    bearings = _compass(layout.x[nbrs] - layout.x[i], layout.y[nbrs] - layout.y[i])
    return CellContext(i, nbrs, dist, np.asarray(bearings, dtype=float), rule)


def compute_contexts(layout: CellLayout, cells: Iterable[int] | None = None,
                     bucket_size: float = DEFAULT_BUCKET_SIZE) -> list[CellContext]:
    index = build_index(layout, bucket_size)
    todo = range(len(layout)) if cells is None else cells
    return [cell_context(int(i), layout, index) for i in todo]


# Brute-force reference implementations, scalar and all-pairs. Used as test oracles.

def neighbors_bruteforce(i: int, layout: CellLayout) -> list[int]:
    box = neighbor_box(layout.point(i), float(layout.azimuth[i]))
    return [
        j for j in range(len(layout))
        if j != i and layout.operator[j] == layout.operator[i] and box.contains(layout.point(j))
    ]


def interference_rule_scalar(i: int, j: int, layout: CellLayout) -> int:
    pi, pj = layout.point(i), layout.point(j)
    d = math.hypot(pj.x - pi.x, pj.y - pi.y)
    same_site = layout.site[i] == layout.site[j]
    if same_site and circular_diff(layout.azimuth[i], layout.azimuth[j]) <= SAME_SITE_MAX_AZIMUTH_DIFF:
        return RULE_SAME_SITE
    if not same_site and d <= CLOSE_RANGE_M:
        return RULE_CLOSE_RANGE
    if CLOSE_RANGE_M < d <= FOV_RANGE_M:
        b = bearing(pi, pj)
        if (circular_diff(b, layout.azimuth[i]) <= FOV_HALF_ANGLE
                and circular_diff(back_bearing(b), layout.azimuth[j]) <= FOV_HALF_ANGLE):
            return RULE_MUTUAL_FOV
    return 0


def interferers_bruteforce(i: int, layout: CellLayout) -> list[int]:
    return [j for j in neighbors_bruteforce(i, layout) if interference_rule_scalar(i, j, layout)]
