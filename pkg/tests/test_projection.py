import math

import numpy as np
import pytest

from efficientlo.projection import (
    ProjectedCloud,
    ProjectionConfig,
    crop_square,
    project,
    projection_bins,
    read_grid,
    wrap_column,
    write_grid,
)
from efficientlo.harness.oracles import brute_force_projection, random_cloud

CFG = ProjectionConfig()


@pytest.mark.parametrize(
    "point, cell",
    [
        ((10.0, 0.0, 0.0), (4, 900)),
        ((0.0, 10.0, 0.0), (4, 1350)),
        ((-10.0, 0.0, 0.0), (4, 0)),
        ((-10.0, 1e-9, 0.0), (4, 1799)),
        ((-10.0, -1e-9, 0.0), (4, 0)),
        ((0.0, -10.0, 0.0), (4, 450)),
    ],
)
def test_known_cells(point, cell):
    rows, cols, r, fov = projection_bins(np.array([point]), CFG)
    assert (rows[0], cols[0]) == cell
    assert fov[0] and r[0] == 10.0


def test_row_pitch():
    # rows are 26.8/64 degrees tall, starting at +2 degrees
    el = math.radians(2.0 - 26.8 / 64 * 10.5)
    rows, _, _, _ = projection_bins(np.array([[math.cos(el), 0, math.sin(el)]]) * 20, CFG)
    assert rows[0] == 10


def test_out_of_fov_and_origin():
    pts = np.array([[0, 0, 0], [10, 0, 5], [10, 0, -10], [10, 0, 0]], dtype=float)
    pc = project(pts, CFG)
    assert pc.count == 1
    assert pc.stats == {"n_input": 4, "n_origin": 1, "n_out_of_fov": 2, "n_occluded": 0}


def test_collision_keeps_nearest_then_lowest_index():
    pts = np.array([[20.0, 0, 0], [10.0, 0, 0], [10.0, 0, 0], [30.0, 0, 0]])
    pc = project(pts, CFG)
    assert pc.count == 1
    assert pc.source[4, 900] == 1
    assert pc.stats["n_occluded"] == 3
    np.testing.assert_array_equal(pc.coords[4, 900], [10, 0, 0])


def test_matches_brute_force(rng):
    for _ in range(5):
        pts = random_cloud(rng, 3000, CFG, duplicates=0.3)
        assert np.array_equal(project(pts, CFG).source.reshape(-1), brute_force_projection(pts, CFG))


def test_roundtrip_small_grid(rng):
    cfg = ProjectionConfig(H=8, W=16)
    pts = random_cloud(rng, 500, cfg)
    pc = project(pts, cfg)
    rows, cols, _, fov = projection_bins(pc.points, cfg)
    assert fov.all()
    np.testing.assert_array_equal(np.stack([rows, cols], 1), pc.cell_rc)


def test_empty_cloud():
    pc = project(np.zeros((0, 3)), CFG)
    assert pc.count == 0 and pc.points.shape == (0, 3)


def test_downsample_geometry():
    shapes = []
    proj = CFG
    for s in [(4, 8), (2, 2), (2, 2), (1, 2)]:
        proj = proj.downsample(*s)
        shapes.append((proj.H, proj.W))
    assert shapes == [(16, 225), (8, 112), (4, 56), (4, 28)]
    assert proj.fov_up == 2.0
    # 225 columns halve to 112: the pitch stays 2 pi / W of the new grid
    assert CFG.downsample(1, 1) == CFG


def test_wrap_column():
    assert wrap_column(-1, 1800) == 1799
    assert wrap_column(1800, 1800) == 0
    np.testing.assert_array_equal(wrap_column(np.array([-3, 5, 20]), 8), [5, 5, 4])
    with pytest.raises(ValueError):
        wrap_column(0, 0)


def test_crop_square():
    pts = np.array([[15, 0, 0], [15.01, 0, 0], [-3, -15, 9], [0, 16, 0]], dtype=float)
    np.testing.assert_array_equal(crop_square(pts, 15), pts[[0, 2]])
    assert crop_square(pts, math.inf).shape == (4, 3)
    with pytest.raises(ValueError):
        crop_square(pts, 0)


def test_grid_file_roundtrip(tmp_path, rng):
    pc = project(random_cloud(rng, 2000, ProjectionConfig(H=16, W=64)), ProjectionConfig(H=16, W=64))
    path = tmp_path / "g.bin"
    write_grid(path, pc)
    assert path.stat().st_size == 8 + 16 * 64 * 13
    back = read_grid(path)
    np.testing.assert_array_equal(back.valid, pc.valid)
    np.testing.assert_array_equal(back.coords, pc.coords.astype(np.float32).astype(np.float64))
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(ValueError):
        read_grid(path)


def test_config_validation():
    with pytest.raises(ValueError):
        ProjectionConfig(H=0)
    with pytest.raises(ValueError):
        ProjectionConfig(fov_up=-30)
    with pytest.raises(ValueError):
        CFG.downsample(128, 1)


def test_cloud_views():
    coords = np.zeros((2, 3, 3))
    valid = np.array([[False, True, False], [True, False, True]])
    coords[valid] = [[1, 0, 0], [2, 0, 0], [3, 0, 0]]
    pc = ProjectedCloud(coords, valid)
    np.testing.assert_array_equal(pc.flat_valid, [1, 3, 5])
    np.testing.assert_array_equal(pc.cell_rc, [[0, 1], [1, 0], [1, 2]])
    np.testing.assert_array_equal(pc.rank, [-1, 0, -1, 1, -1, 2])
    np.testing.assert_array_equal(pc.source, [[-1, 0, -1], [1, -1, 2]])
    with pytest.raises(ValueError):
        ProjectedCloud(np.zeros((2, 2, 3)), np.zeros((2, 3), bool))
