import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cellqos.spatial import (BOX_HALF_SIDE_M, RULE_CLOSE_RANGE, RULE_MUTUAL_FOV, RULE_SAME_SITE, CellLayout,
                             GeometryError, PlanarPoint, SpatialIndex, back_bearing, bearing, build_index,
                             circular_diff, classify_interferers, compute_contexts, interferers,
                             interferers_bruteforce, neighbor_box, neighbors, neighbors_bruteforce, project,
                             radius_query)


def layout(points, azimuths, operators=None, sites=None):
    n = len(points)
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    return CellLayout.from_arrays([f"c{i}" for i in range(n)], xs, ys, azimuths,
                                  operators or ["A"] * n, sites or [f"s{i}" for i in range(n)])


def random_layout(n, seed, extent=5000.0, n_ops=2):
    rng = np.random.default_rng(seed)
    sites = rng.integers(0, n // 3 + 1, size=n)
    site_xy = rng.uniform(-extent, extent, size=(n // 3 + 1, 2))
    xy = site_xy[sites] + rng.normal(0, 2.0, size=(n, 2))
    return CellLayout.from_arrays([f"c{i}" for i in range(n)], xy[:, 0], xy[:, 1], rng.uniform(0, 360, n),
                                  rng.integers(0, n_ops, n), sites)


class TestProjection:
    def test_origin(self):
        p = project(29.0, 41.0, 29.0, 41.0)
        assert (p.x, p.y) == (0.0, 0.0)

    def test_north(self):
        p = project(29.0, 41.001, 29.0, 41.0)
        assert p.x == pytest.approx(0.0, abs=1e-9)
        assert p.y == pytest.approx(111.32, abs=1e-6)

    def test_latitude_shrink(self):
        p = project(10.001, 60.0, 10.0, 60.0)
        assert p.x == pytest.approx(55.66, abs=1e-6)

    def test_vectorized(self):
        x, y = project(np.array([29.0, 29.001]), np.array([41.0, 41.0]), 29.0, 41.0)
        assert x.shape == (2,)
        assert x[1] == pytest.approx(111.32 * math.cos(math.radians(41.0)), abs=1e-9)


class TestAngles:
    @pytest.mark.parametrize("a,b,expected", [(350, 10, 20), (120, 120, 0), (0, 180, 180), (10, 350, 20)])
    def test_circular_diff(self, a, b, expected):
        assert circular_diff(a, b) == pytest.approx(expected)

    @given(st.floats(-720, 720), st.floats(-720, 720))
    def test_circular_diff_range(self, a, b):
        d = circular_diff(a, b)
        assert 0 <= d <= 180
        assert d == pytest.approx(circular_diff(b, a))

    @pytest.mark.parametrize("to,expected", [((0, 100), 0.0), ((100, 0), 90.0), ((100, 100), 45.0),
                                             ((0, -100), 180.0), ((-100, 0), 270.0)])
    def test_bearing(self, to, expected):
        assert bearing(PlanarPoint(0, 0), PlanarPoint(*to)) == pytest.approx(expected, abs=1e-12)

    def test_coincident(self):
        with pytest.raises(GeometryError):
            bearing(PlanarPoint(1, 1), PlanarPoint(1, 1))

    def test_back_bearing(self):
        assert back_bearing(300.0) == 120.0
        assert back_bearing(90.0) == 270.0


class TestBox:
    def test_center_north(self):
        box = neighbor_box(PlanarPoint(0, 0), 0.0)
        assert (box.center.x, box.center.y) == pytest.approx((0.0, 500.0), abs=1e-9)

    def test_corner_north(self):
        box = neighbor_box(PlanarPoint(0, 0), 0.0)
        got = {(round(c.x, 6), round(c.y, 6)) for c in box.corners()}
        assert (848.528137, 1348.528137) in got

    def test_center_fig1(self):
        box = neighbor_box(PlanarPoint(0, 0), 120.0)
        assert box.center.x == pytest.approx(433.0127019, abs=1e-6)
        assert box.center.y == pytest.approx(-250.0, abs=1e-6)

    @given(st.floats(0, 360, exclude_max=True), st.floats(-1e4, 1e4), st.floats(-1e4, 1e4))
    def test_corners_at_1200(self, az, x, y):
        box = neighbor_box(PlanarPoint(x, y), az)
        for k, c in enumerate(box.corners()):
            assert math.hypot(c.x - box.center.x, c.y - box.center.y) == pytest.approx(1200.0, abs=1e-6)
            b = bearing(box.center, c)
            assert circular_diff(b, az + 45 + 90 * ((k + 3) % 4)) == pytest.approx(0.0, abs=1e-6)
        assert box.half_side == pytest.approx(BOX_HALF_SIDE_M)


class TestNeighbors:
    def test_center_and_corner(self):
        corner = (848.528137423857, 1348.528137423857)
        lay = layout([(0, 0), (0, 500), corner, (0, 2000)], [0, 0, 0, 0])
        got = neighbors(0, lay, build_index(lay))
        assert list(got) == [1, 2]

    def test_other_operator_excluded(self):
        lay = layout([(0, 0), (0, 500)], [0, 0], operators=["A", "B"])
        assert neighbors(0, lay, build_index(lay)).size == 0

    def test_behind_cells_can_be_neighbors(self):
        # the box extends 348 m behind the cell
        lay = layout([(0, 0), (0, -300)], [0, 0])
        assert list(neighbors(0, lay, build_index(lay))) == [1]
        assert circular_diff(bearing(PlanarPoint(0, 0), PlanarPoint(0, -300)), 0) > 90

    def test_matches_bruteforce(self):
        lay = random_layout(400, seed=3, extent=2500)
        idx = build_index(lay)
        for i in range(len(lay)):
            assert list(neighbors(i, lay, idx)) == neighbors_bruteforce(i, lay)


class TestInterferers:
    def test_same_site_rule(self):
        lay = layout([(0, 0), (1, 1)], [10, 100], sites=["s", "s"])
        rule, _ = classify_interferers(0, np.array([1]), lay)
        assert rule[0] == RULE_SAME_SITE

    def test_same_site_too_far_apart_in_azimuth(self):
        lay = layout([(0, 0), (1, 1)], [10, 120], sites=["s", "s"])
        rule, _ = classify_interferers(0, np.array([1]), lay)
        assert rule[0] == 0

    def test_same_site_never_close_range(self):
        lay = layout([(0, 0), (0, 50)], [0, 180], sites=["s", "s"])
        rule, _ = classify_interferers(0, np.array([1]), lay)
        assert rule[0] == 0

    def test_close_range(self):
        lay = layout([(0, 0), (0, 100)], [0, 0])
        rule, dist = classify_interferers(0, np.array([1]), lay)
        assert rule[0] == RULE_CLOSE_RANGE and dist[0] == pytest.approx(100)

    def test_close_range_boundary(self):
        lay = layout([(0, 0), (0, 150)], [0, 90])
        rule, _ = classify_interferers(0, np.array([1]), lay)
        assert rule[0] == RULE_CLOSE_RANGE

    def test_mutual_fov(self):
        facing = layout([(0, 0), (0, 500)], [0, 180])
        assert list(interferers(0, np.array([1]), facing)) == [1]
        rotated = layout([(0, 0), (0, 500)], [90, 270])
        assert interferers(0, np.array([1]), rotated).size == 0

    def test_mutual_fov_needs_both(self):
        lay = layout([(0, 0), (0, 500)], [0, 0])
        rule, _ = classify_interferers(0, np.array([1]), lay)
        assert rule[0] == 0

    def test_fov_range_limit(self):
        lay = layout([(0, 0), (0, 1001)], [0, 180])
        rule, _ = classify_interferers(0, np.array([1]), lay)
        assert rule[0] == 0
        lay = layout([(0, 0), (0, 1000)], [0, 180])
        rule, _ = classify_interferers(0, np.array([1]), lay)
        assert rule[0] == RULE_MUTUAL_FOV

    def test_subset_of_neighbors(self):
        lay = random_layout(300, seed=5, extent=2000)
        for ctx in compute_contexts(lay):
            assert set(ctx.interferers) <= set(ctx.neighbors)

    def test_matches_bruteforce(self):
        lay = random_layout(400, seed=11, extent=2000)
        idx = build_index(lay)
        for i in range(len(lay)):
            got = interferers(i, neighbors(i, lay, idx), lay)
            assert list(got) == interferers_bruteforce(i, lay)


class TestIndex:
    def test_single_cell(self):
        idx = SpatialIndex(np.array([5.0]), np.array([5.0]))
        assert list(radius_query(idx, PlanarPoint(5.0, 5.0), 1.0)) == [0]

    def test_inclusive_radius(self):
        idx = SpatialIndex(np.array([0.0, 3.0]), np.array([0.0, 4.0]))
        assert list(idx.radius_query(PlanarPoint(0, 0), 5.0)) == [0, 1]

    def test_each_cell_in_one_bucket(self):
        rng = np.random.default_rng(0)
        x, y = rng.uniform(-3000, 3000, (2, 500))
        idx = SpatialIndex(x, y, 250.0)
        members = np.concatenate(list(idx.buckets().values()))
        assert sorted(members) == list(range(500))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.floats(1, 2000), st.floats(50, 1000))
    def test_radius_matches_scan(self, seed, r, bucket):
        rng = np.random.default_rng(seed)
        x, y = rng.uniform(-3000, 3000, (2, 300))
        idx = SpatialIndex(x, y, bucket)
        q = PlanarPoint(*rng.uniform(-3000, 3000, 2))
        expected = np.nonzero(np.hypot(x - q.x, y - q.y) <= r)[0]
        assert list(idx.radius_query(q, r)) == list(expected)


def test_rigid_motion_small():
    lay = random_layout(200, seed=2, extent=1500)
    base = [(tuple(c.neighbors), tuple(c.interferers)) for c in compute_contexts(lay)]
    th = math.radians(33.0)
    x = lay.x * math.cos(th) + lay.y * math.sin(th) + 1234.5
    y = -lay.x * math.sin(th) + lay.y * math.cos(th) - 987.0
    moved = CellLayout.from_arrays(lay.names, x, y, lay.azimuth + 33.0, lay.operator, lay.site)
    again = [(tuple(c.neighbors), tuple(c.interferers)) for c in compute_contexts(moved)]
    assert again == base
