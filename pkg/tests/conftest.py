import numpy as np
import pytest

from revox.grid import GridConfig, VoxelGrid, build_neighbor_graph


def grid_from_counts(counts_2d, n_max, count_mode="standard", connectivity=4):
    """VoxelGrid + NeighborGraph from an occupancy/count matrix.

    counts_2d[y][x] > 0 marks a voxel with that many points; voxel ids follow
    row-major scan order. Point indices are synthetic but consistent.
    """
    counts_2d = np.asarray(counts_2d)
    ys, xs = np.nonzero(counts_2d > 0)
    order = np.argsort(ys * counts_2d.shape[1] + xs, kind="stable")
    ys, xs = ys[order], xs[order]
    cells = np.stack([xs, ys, np.zeros_like(xs)], axis=1).astype(np.int32)
    counts = counts_2d[ys, xs].astype(np.int32)
    h, w = counts_2d.shape
    config = GridConfig(
        voxel_size=(1.0, 1.0),
        x_range=(0.0, float(w)),
        y_range=(0.0, float(h)),
        z_range=(-1.0, 1.0),
        max_points_per_voxel=int(n_max),
        max_voxels=max(1, len(cells)),
        connectivity=connectivity,
        count_mode=count_mode,
    )
    offsets = np.zeros(len(cells) + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    grid = VoxelGrid(config, cells, counts, offsets, np.arange(offsets[-1]))
    graph = build_neighbor_graph(cells, connectivity)
    return grid, graph


class UnionFind:
    """Independent component oracle (path compression, no ranks)."""

    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra

    def same(self, a, b):
        return self.find(a) == self.find(b)


def union_find_components(graph):
    uf = UnionFind(len(graph))
    slots = graph.slots
    for v in range(len(graph)):
        for u in slots[v]:
            if u >= 0:
                uf.union(v, int(u))
    return uf
