import math

import numpy as np
import pytest

from conftest import grid_from_counts, union_find_components
from revox.grid import GridConfig, connected_components, partition
from revox.pointcloud import PointCloud


def make_cloud(xyz):
    data = np.zeros((len(xyz), 5), np.float32)
    data[:, :3] = xyz
    return PointCloud(data)


def pillar_config(**kw):
    base = dict(
        voxel_size=(0.25, 0.25),
        x_range=(0.0, 10.0),
        y_range=(0.0, 10.0),
        z_range=(-3.0, 1.0),
        max_points_per_voxel=25,
        max_voxels=10_000,
    )
    base.update(kw)
    return GridConfig(**base)


def brute_force_partition(cloud, config):
    """Reference bucketing: plain dict loop with the cap rules."""
    sx, sy = config.voxel_size[0], config.voxel_size[1]
    sz = config.voxel_size[2] if len(config.voxel_size) == 3 else None
    cells = {}
    order = []
    for i, (x, y, z, _, _) in enumerate(cloud.data.astype(np.float64)):
        if not (config.x_range[0] <= x < config.x_range[1]
                and config.y_range[0] <= y < config.y_range[1]
                and config.z_range[0] <= z < config.z_range[1]):
            continue
        cx = math.floor((x - config.x_range[0]) / sx)
        cy = math.floor((y - config.y_range[0]) / sy)
        cz = math.floor((z - config.z_range[0]) / sz) if sz else 0
        key = (cx, cy, cz)
        if key not in cells:
            if len(cells) >= config.max_voxels:
                continue  # grid full: new cells are no longer admitted
            cells[key] = []
            order.append(key)
        if len(cells[key]) < config.max_points_per_voxel:
            cells[key].append(i)
    return cells, order


def test_cell_assignment_floor():
    cloud = make_cloud([(0.13, 0.07, -1.0)])
    grid, _ = partition(cloud, pillar_config())
    assert tuple(grid.cells[0]) == (0, 0, 0)


def test_per_voxel_cap_drops_in_arrival_order():
    cloud = make_cloud([(0.1, 0.1, 0.0), (0.11, 0.1, 0.0), (0.12, 0.1, 0.0)])
    grid, _ = partition(cloud, pillar_config(max_points_per_voxel=2))
    assert len(grid) == 1
    assert grid.counts[0] == 2
    assert list(grid.points_of(0)) == [0, 1]


def test_max_boundary_excluded():
    cloud = make_cloud([(10.0, 5.0, 0.0), (9.999, 5.0, 0.0)])
    grid, _ = partition(cloud, pillar_config())
    assert len(grid) == 1


def test_voxel_cap_stops_new_cells_only():
    # four cells in order; cap 2: late cells dropped, recorded cells keep filling
    pts = [(0.1, 0.1, 0), (0.6, 0.1, 0), (1.1, 0.1, 0), (1.6, 0.1, 0),
           (0.12, 0.1, 0)]
    grid, _ = partition(make_cloud(pts), pillar_config(voxel_size=(0.5, 0.5),
                                                       max_voxels=2))
    assert len(grid) == 2
    assert grid.counts.tolist() == [2, 1]
    assert list(grid.points_of(0)) == [0, 4]


def test_against_brute_force_oracle():
    rng = np.random.default_rng(11)
    xyz = rng.uniform([0, 0, -3], [10, 10, 1], (10_000, 3))
    cloud = make_cloud(xyz)
    config = pillar_config(max_points_per_voxel=5, max_voxels=700)
    grid, _ = partition(cloud, config)
    cells, order = brute_force_partition(cloud, config)
    assert len(grid) == len(order)
    for vid, key in enumerate(order):
        assert tuple(grid.cells[vid]) == key
        assert list(grid.points_of(vid)) == cells[key]


def test_voxel_mode_against_oracle():
    rng = np.random.default_rng(13)
    xyz = rng.uniform([0, 0, -3], [4, 4, 1], (5_000, 3))
    cloud = make_cloud(xyz)
    config = pillar_config(voxel_size=(0.25, 0.25, 0.2),
                           max_points_per_voxel=4, max_voxels=3_000)
    grid, _ = partition(cloud, config)
    cells, order = brute_force_partition(cloud, config)
    assert len(grid) == len(order)
    for vid, key in enumerate(order):
        assert tuple(grid.cells[vid]) == key
        assert list(grid.points_of(vid)) == cells[key]


def test_points_inside_cell_bounds():
    rng = np.random.default_rng(17)
    xyz = rng.uniform([0, 0, -3], [10, 10, 1], (2_000, 3))
    cloud = make_cloud(xyz)
    config = pillar_config()
    grid, _ = partition(cloud, config)
    for vid in range(len(grid)):
        cx, cy, _ = grid.cells[vid]
        pts = cloud.xyz[grid.points_of(vid)].astype(np.float64)
        assert (pts[:, 0] >= cx * 0.25).all() and (pts[:, 0] < (cx + 1) * 0.25).all()
        assert (pts[:, 1] >= cy * 0.25).all() and (pts[:, 1] < (cy + 1) * 0.25).all()


def test_adjacency_symmetric_and_mirrored():
    rng = np.random.default_rng(7)
    xyz = rng.uniform([0, 0, -1], [5, 5, 0], (3_000, 3))
    grid, graph = partition(make_cloud(xyz), pillar_config())
    mirror = {0: 1, 1: 0, 2: 3, 3: 2}
    for v in range(len(grid)):
        for k, u in enumerate(graph.slots[v]):
            if u >= 0:
                assert graph.slots[u, mirror[k]] == v


def test_empty_and_out_of_range_inputs():
    empty, graph = partition(make_cloud(np.zeros((0, 3))), pillar_config())
    assert len(empty) == 0 and len(graph) == 0
    outside = make_cloud([(50.0, 50.0, 0.0)])
    grid, _ = partition(outside, pillar_config())
    assert len(grid) == 0


def test_permutation_invariance_without_caps():
    rng = np.random.default_rng(23)
    xyz = rng.uniform([0, 0, -3], [10, 10, 1], (4_000, 3))
    cloud = make_cloud(xyz)
    config = pillar_config(max_points_per_voxel=4_000, max_voxels=100_000)
    grid_a, _ = partition(cloud, config)
    perm = rng.permutation(len(xyz))
    grid_b, _ = partition(make_cloud(xyz[perm]), config)

    def cell_sets(grid, index_map=None):
        out = {}
        for vid in range(len(grid)):
            idx = grid.points_of(vid)
            if index_map is not None:
                idx = index_map[idx]
            out[tuple(grid.cells[vid])] = frozenset(int(i) for i in idx)
        return out

    assert cell_sets(grid_a) == cell_sets(grid_b, index_map=perm)


def test_six_connectivity_voxel_mode():
    pts = [(0.1, 0.1, -0.9), (0.1, 0.1, -0.7), (0.1, 0.1, -0.5)]
    config = pillar_config(voxel_size=(0.25, 0.25, 0.2), connectivity=6,
                           z_range=(-1.0, 1.0))
    grid, graph = partition(make_cloud(pts), config)
    assert len(grid) == 3
    assert graph.n_slots == 6
    assert graph.slots[1, 4] == 0 and graph.slots[1, 5] == 2  # down, up
    # per-z-slice 4-connectivity keeps stacked voxels apart
    grid4, graph4 = partition(make_cloud(pts), pillar_config(
        voxel_size=(0.25, 0.25, 0.2), z_range=(-1.0, 1.0)))
    labels = connected_components(graph4)
    assert labels.n_components == 3


def test_six_connectivity_requires_voxel_mode():
    with pytest.raises(ValueError):
        pillar_config(connectivity=6)


@pytest.mark.parametrize("kw", [
    dict(voxel_size=(0.0, 0.25)),
    dict(voxel_size=(0.25,)),
    dict(x_range=(5.0, 5.0)),
    dict(max_points_per_voxel=0),
    dict(max_voxels=0),
    dict(count_mode="thirds"),
])
def test_invalid_config_rejected(kw):
    with pytest.raises(ValueError):
        pillar_config(**kw)


def test_two_adjacent_cells_one_component():
    grid, graph = grid_from_counts([[1, 1]], n_max=4)
    labels = connected_components(graph)
    assert labels.n_components == 1
    assert labels[0] == labels[1] == 0


def test_gap_splits_components():
    grid, graph = grid_from_counts([[1, 0, 1]], n_max=4)
    labels = connected_components(graph)
    assert labels.n_components == 2
    assert labels[0] == 0 and labels[1] == 1


def test_components_match_union_find_oracle():
    rng = np.random.default_rng(31)
    occupancy = (rng.random((64, 64)) < 0.45).astype(int)
    grid, graph = grid_from_counts(occupancy, n_max=4)
    labels = connected_components(graph)
    uf = union_find_components(graph)
    by_label, by_root = {}, {}
    for v in range(len(graph)):
        by_label.setdefault(labels[v], set()).add(v)
        by_root.setdefault(uf.find(v), set()).add(v)
    assert sorted(map(sorted, by_label.values())) == sorted(map(sorted, by_root.values()))


def test_component_labels_follow_insertion_order():
    grid, graph = grid_from_counts([[1, 0, 1], [1, 0, 1]], n_max=4)
    labels = connected_components(graph)
    assert labels[0] == 0  # first voxel seeds label 0
    assert labels.labels.tolist() == [0, 1, 0, 1]
