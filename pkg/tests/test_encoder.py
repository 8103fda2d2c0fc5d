import numpy as np
import pytest

from revox.encoder import (
    FeatureSpec,
    PointFeatureBlock,
    column_max,
    decorate,
    encode_avg,
    encode_weighted,
    scatter,
    uniform_weights,
)
from revox.grid import GridConfig, partition
from revox.pointcloud import PointCloud
from revox.walk import reconfigure


def make_cloud(rows):
    data = np.zeros((len(rows), 5), np.float32)
    for i, row in enumerate(rows):
        data[i, :len(row)] = row
    return PointCloud(data)


def small_config(**kw):
    base = dict(
        voxel_size=(1.0, 1.0),
        x_range=(0.0, 8.0),
        y_range=(0.0, 8.0),
        z_range=(-4.0, 4.0),
        max_points_per_voxel=4,
        max_voxels=100,
    )
    base.update(kw)
    return GridConfig(**base)


def random_block(rng, n=5, width=4, absent=()):
    center_mask = np.zeros(n, bool)
    center_mask[: rng.integers(1, n + 1)] = True
    center = rng.normal(size=(n, width)) * center_mask[:, None]
    neighbors = np.zeros((4, n, width))
    masks = np.zeros((4, n), bool)
    for k in range(4):
        if k in absent:
            continue
        m = rng.integers(0, n + 1)
        masks[k, :m] = True
        neighbors[k] = rng.normal(size=(n, width)) * masks[k][:, None]
    return PointFeatureBlock(0, center, center_mask, neighbors, masks)


def test_point_at_cell_center_has_zero_pillar_offset():
    cloud = make_cloud([(0.5, 0.5, -1.0, 0.3)])
    grid, graph = partition(cloud, small_config())
    rec = reconfigure(grid, graph, seed=0)
    block = decorate(grid, rec, cloud, FeatureSpec("pillars"))[0]
    x_p, y_p = block.center[0, 6], block.center[0, 7]
    assert abs(x_p) < 1e-9 and abs(y_p) < 1e-9


def test_single_point_voxel_zero_mean_offsets():
    cloud = make_cloud([(0.2, 0.8, -1.0, 0.3)])
    grid, graph = partition(cloud, small_config())
    rec = reconfigure(grid, graph, seed=0)
    block = decorate(grid, rec, cloud, FeatureSpec("pillars"))[0]
    assert np.allclose(block.center[0, 3:6], 0.0)


def test_decoration_matches_direct_arithmetic():
    rng = np.random.default_rng(2)
    xyz = rng.uniform([0, 0, -4], [8, 8, 4], (60, 3))
    rows = [(x, y, z, rng.random(), rng.random()) for x, y, z in xyz]
    cloud = make_cloud(rows)
    grid, graph = partition(cloud, small_config())
    rec = reconfigure(grid, graph, seed=4)
    spec = FeatureSpec("pillars")
    blocks = decorate(grid, rec, cloud, spec)
    pts = cloud.data.astype(np.float64)
    for v, block in enumerate(blocks):
        own = grid.points_of(v)
        mean = pts[own, :3].mean(axis=0)
        cx, cy, _ = grid.cells[v]
        center_xy = np.array([cx + 0.5, cy + 0.5])
        for r, i in enumerate(own):
            x, y, z = pts[i, :3]
            row = block.center[r]
            assert np.isclose(row[0], np.sqrt(x * x + y * y + z * z))
            assert np.isclose(row[1], z)
            assert np.isclose(row[2], pts[i, 4])  # timestamp feature
            assert np.allclose(row[3:6], pts[i, :3] - mean)
            assert np.allclose(row[6:8], [x, y] - center_xy)
        # neighbor offsets stay relative to THIS center voxel
        for k in range(4):
            final = rec.final(v, k)
            if final is None:
                assert not block.neighbor_masks[k].any()
                continue
            their = grid.points_of(final)
            for r, i in enumerate(their):
                row = block.neighbors[k, r]
                assert np.allclose(row[3:6], pts[i, :3] - mean)
                assert np.allclose(row[6:8], pts[i, :2] - center_xy)


def test_second_mode_uses_reflectance():
    cloud = make_cloud([(1.2, 1.2, -0.5, 0.7, 2.0)])
    grid, graph = partition(cloud, small_config())
    rec = reconfigure(grid, graph, seed=0)
    block = decorate(grid, rec, cloud, FeatureSpec("second"))[0]
    assert block.center.shape[1] == 3
    assert np.isclose(block.center[0, 2], np.float32(0.7))


def test_encode_avg_example():
    center = np.array([[1.0, 2.0], [3.0, 4.0], [0.0, 0.0]])
    cmask = np.array([True, True, False])
    nb = np.zeros((4, 3, 2))
    nmask = np.zeros((4, 3), bool)
    nb[0, 0] = (5.0, 6.0)
    nmask[0, 0] = True
    block = PointFeatureBlock(0, center, cmask, nb, nmask)
    feat = encode_avg(block)
    assert np.allclose(feat.vector, [3.0, 4.0])


def test_encode_avg_center_only():
    center = np.array([[1.0, 2.0], [3.0, 4.0]])
    block = PointFeatureBlock(0, center, np.array([True, True]),
                              np.zeros((4, 2, 2)), np.zeros((4, 2), bool))
    assert np.allclose(encode_avg(block).vector, [2.0, 3.0])


def test_encode_avg_matches_brute_force():
    rng = np.random.default_rng(5)
    for _ in range(200):
        block = random_block(rng)
        rows = [block.center[i] for i in range(len(block.center_mask))
                if block.center_mask[i]]
        for k in range(4):
            rows += [block.neighbors[k][i] for i in range(block.neighbors.shape[1])
                     if block.neighbor_masks[k][i]]
        expected = np.mean(rows, axis=0)
        assert np.array_equal(encode_avg(block).vector, expected)


def test_encode_avg_all_masked_errors():
    block = PointFeatureBlock(0, np.zeros((2, 2)), np.zeros(2, bool),
                              np.zeros((4, 2, 2)), np.zeros((4, 2), bool))
    with pytest.raises(ValueError):
        encode_avg(block)


def test_encode_weighted_all_neighbors_absent():
    rng = np.random.default_rng(6)
    block = random_block(rng, absent=(0, 1, 2, 3))
    feat = encode_weighted(block)
    width = block.center.shape[1]
    assert np.allclose(feat.vector[width:], 0.0)
    assert np.array_equal(feat.vector[:width],
                          column_max(block.center, block.center_mask))


def test_encode_weighted_identical_neighbors_reduce_to_plain_concat():
    rng = np.random.default_rng(7)
    base = rng.normal(size=(5, 4))
    mask = np.ones(5, bool)
    nb = np.stack([base] * 4)
    masks = np.ones((4, 5), bool)
    block = PointFeatureBlock(0, base, mask, nb, masks)
    feat = encode_weighted(block)
    assert np.allclose(feat.vector[:4], base.max(axis=0))
    assert np.allclose(feat.vector[4:], base.max(axis=0))


def test_encode_weighted_matches_formula_replay():
    rng = np.random.default_rng(8)
    for _ in range(100):
        block = random_block(rng)
        w = rng.random(4)
        feat = encode_weighted(block, weight_fn=lambda c, m: w)
        # independent replay with explicit loops
        n, width = block.center.shape
        summed = np.zeros((n, width))
        for k in range(4):
            for i in range(n):
                summed[i] += w[k] * block.neighbors[k, i]
        any_mask = block.neighbor_masks.any(axis=0)
        left = block.center[block.center_mask].max(axis=0)
        right = (summed[any_mask].max(axis=0) if any_mask.any()
                 else np.zeros(width))
        expected = np.concatenate([left, right])
        assert np.allclose(feat.vector, expected, rtol=1e-6)


def test_encode_weighted_rejects_bad_weights():
    rng = np.random.default_rng(9)
    block = random_block(rng)
    with pytest.raises(ValueError):
        encode_weighted(block, weight_fn=lambda c, m: np.array([np.nan, 0, 0, 0]))
    with pytest.raises(ValueError):
        encode_weighted(block, weight_fn=lambda c, m: np.array([-0.1, 0, 0, 0]))


def test_masked_rows_never_influence_outputs():
    rng = np.random.default_rng(10)
    block = random_block(rng)
    tampered = PointFeatureBlock(
        block.voxel_id,
        block.center + (~block.center_mask[:, None]) * 99.0,
        block.center_mask,
        block.neighbors + (~block.neighbor_masks[:, :, None]) * 99.0,
        block.neighbor_masks,
    )
    # zeroing masked rows (the canonical form) must reproduce the original
    rezeroed = PointFeatureBlock(
        block.voxel_id,
        tampered.center * tampered.center_mask[:, None],
        tampered.center_mask,
        tampered.neighbors * tampered.neighbor_masks[:, :, None],
        tampered.neighbor_masks,
    )
    assert np.array_equal(encode_avg(rezeroed).vector, encode_avg(block).vector)
    assert np.array_equal(encode_weighted(rezeroed).vector,
                          encode_weighted(block).vector)


def test_translation_consistency():
    rng = np.random.default_rng(11)
    xyz = rng.uniform([0, 0, -4], [8, 8, 4], (40, 3))
    rows = [(x, y, z, 0.5, 0.0) for x, y, z in xyz]
    cloud = make_cloud(rows)
    config = small_config()
    grid, graph = partition(cloud, config)
    rec = reconfigure(grid, graph, seed=1)
    blocks = decorate(grid, rec, cloud, FeatureSpec("pillars"))

    shift = (100.0, -50.0, 2.0)
    moved = cloud.translated(*shift)
    config2 = small_config(
        x_range=(config.x_range[0] + shift[0], config.x_range[1] + shift[0]),
        y_range=(config.y_range[0] + shift[1], config.y_range[1] + shift[1]),
        z_range=(config.z_range[0] + shift[2], config.z_range[1] + shift[2]),
    )
    grid2, graph2 = partition(moved, config2)
    rec2 = reconfigure(grid2, graph2, seed=1)
    blocks2 = decorate(grid2, rec2, moved, FeatureSpec("pillars"))
    assert len(blocks) == len(blocks2)
    for b1, b2 in zip(blocks, blocks2):
        # offsets unchanged, d and z change with the translation
        assert np.allclose(b1.center[:, 3:], b2.center[:, 3:], atol=1e-4)
        assert np.array_equal(b1.center_mask, b2.center_mask)


def test_scatter_single_voxel():
    cloud = make_cloud([(0.5, 0.5, 0.0, 0.1)])
    grid, graph = partition(cloud, small_config())
    rec = reconfigure(grid, graph, seed=0)
    feats = [encode_avg(b) for b in decorate(grid, rec, cloud, FeatureSpec("second"))]
    dense = scatter(feats, grid, (8, 8))
    assert dense.shape == (8, 8, 3)
    nz = np.nonzero(dense.any(axis=2))
    assert list(zip(*nz)) == [(0, 0)]


def test_scatter_empty():
    dense = scatter([], None, (4, 4))
    assert dense.shape == (4, 4, 0)
    assert not dense.any()


def test_scatter_cells_match_grid_cells():
    rng = np.random.default_rng(12)
    xyz = rng.uniform([0, 0, -4], [8, 8, 4], (300, 3))
    cloud = make_cloud([(x, y, z, 0.2) for x, y, z in xyz])
    grid, graph = partition(cloud, small_config())
    rec = reconfigure(grid, graph, seed=2)
    feats = [encode_avg(b) for b in decorate(grid, rec, cloud, FeatureSpec("second"))]
    dense = scatter(feats, grid, (8, 8))
    lit = {(int(y), int(x)) for y, x in zip(*np.nonzero(dense.any(axis=2)))}
    cells = {(int(c[1]), int(c[0])) for c in grid.cells}
    assert lit == cells


def test_scatter_out_of_shape_errors():
    cloud = make_cloud([(7.5, 7.5, 0.0, 0.1)])
    grid, graph = partition(cloud, small_config())
    rec = reconfigure(grid, graph, seed=0)
    feats = [encode_avg(b) for b in decorate(grid, rec, cloud, FeatureSpec("second"))]
    with pytest.raises(ValueError):
        scatter(feats, grid, (4, 4))


def test_default_weights_and_transform():
    assert np.allclose(uniform_weights(None, None), 0.25)
    m = np.array([[1.0, -2.0], [3.0, 0.5]])
    assert np.allclose(column_max(m, np.array([True, True])), [3.0, 0.5])
    assert np.allclose(column_max(m, np.array([False, False])), [0.0, 0.0])
