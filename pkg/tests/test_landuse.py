import numpy as np
import pytest

from cellqos.landuse import (CATEGORIES, LandUseError, LandUseGrid, category_shares, read_grid,
                             read_grid_dir, scene_moments, write_grid)
from cellqos.spatial import METERS_PER_DEGREE

URBAN, WATER = CATEGORIES.index("urban"), CATEGORIES.index("water")


def grid(codes, origin=(29.0, 41.0), size=10.0):
    return LandUseGrid(origin[0], origin[1], size, np.asarray(codes))


def center_lonlat(g):
    rows, cols = g.shape
    x, y = cols * g.cell_size / 2, rows * g.cell_size / 2
    lon = g.origin_lon + x / (METERS_PER_DEGREE * np.cos(np.radians(g.origin_lat)))
    lat = g.origin_lat + y / METERS_PER_DEGREE
    return lon, lat


def test_all_urban():
    g = grid(np.full((100, 100), URBAN))
    m = scene_moments(g, *center_lonlat(g), (50.0, 150.0, 300.0))
    assert np.all(m[:, URBAN, 0] == 1.0)
    assert np.all(m[:, URBAN, 1] == 0.0)
    assert np.all(m[:, WATER, 0] == 0.0)


def test_half_split():
    codes = np.full((100, 100), URBAN)
    codes[:, 50:] = WATER
    g = grid(codes)
    m = scene_moments(g, *center_lonlat(g), (50.0, 150.0, 300.0))
    assert np.allclose(m[:, URBAN, 0], 0.5)
    assert np.allclose(m[:, URBAN, 1], 0.25)


def test_outside_grid():
    g = grid(np.zeros((10, 10)))
    assert scene_moments(g, 28.0, 41.0, (10.0, 20.0, 30.0)) is None
    assert scene_moments(None, 29.0, 41.0, (10.0, 20.0, 30.0)) is None


def test_tiny_radius_uses_own_cell():
    codes = np.zeros((4, 4), dtype=int)
    codes[1, 2] = WATER
    share = category_shares(grid(codes), 25.0, 15.0, 1.0)
    assert share[WATER] == 1.0


def test_shares_sum_to_one():
    rng = np.random.default_rng(1)
    g = grid(rng.integers(0, 5, (50, 50)))
    for _ in range(20):
        x, y = rng.uniform(0, 500, 2)
        assert category_shares(g, x, y, rng.uniform(5, 400)).sum() == pytest.approx(1.0)


def test_file_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    g = grid(rng.integers(0, 5, (7, 9)), origin=(10.123456789, 50.5), size=25.0)
    write_grid(g, tmp_path / "x.grid")
    back = read_grid(tmp_path / "x.grid")
    assert (back.origin_lon, back.origin_lat, back.cell_size) == (g.origin_lon, g.origin_lat, g.cell_size)
    assert np.array_equal(back.codes, g.codes)
    assert list(read_grid_dir(tmp_path)) == ["x"]
    assert read_grid_dir(tmp_path / "nothing") == {}


def test_bad_files(tmp_path):
    p = tmp_path / "bad.grid"
    p.write_text("a,b\n")
    with pytest.raises(LandUseError):
        read_grid(p)
    p.write_text("origin_x,origin_y,cell_size_m,n_rows,n_cols\n0,0,10,2,2\n0,1\n")
    with pytest.raises(LandUseError):
        read_grid(p)


def test_code_range():
    with pytest.raises(LandUseError):
        grid([[0, 7]])
