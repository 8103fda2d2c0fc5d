"""Sparse voxel/pillar partition of a point cloud, with neighbor adjacency.

Cells are half-open: cell = floor((coord - range_min) / size), and points
exactly on the max boundary are excluded. New cells are admitted in point
order until the voxel cap is reached, after which points falling in
unrecorded cells are skipped while recorded cells keep filling up to the
per-voxel point cap. Dropped points are dropped in arrival order.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

PILLAR_SLOTS = ("left", "right", "back", "front")
VOXEL_SLOTS = PILLAR_SLOTS + ("down", "up")

# bit budget for packing (cx, cy, cz) into one int64 key
_AXIS_BITS = 21
_AXIS_LIMIT = 1 << (_AXIS_BITS - 1)

STANDARD = "standard"
QUARTER = "quarter-adjusted"


@dataclass(frozen=True)
class GridConfig:
    """Partition hyperparameters.

    voxel_size: (l, w) for pillars or (l, w, h) for voxels, meters.
    x_range / y_range / z_range: (min, max) detection range per axis.
    max_points_per_voxel: per-voxel point cap.
    max_voxels: cap on the number of recorded voxels.
    connectivity: 4 (X-Y, per z slice) or 6 (voxel mode only).
    count_mode: "standard" or "quarter-adjusted" (counts divided by 4 and
    rounded up when sizing walk probabilities and step budgets).
    """

    voxel_size: tuple
    x_range: tuple
    y_range: tuple
    z_range: tuple
    max_points_per_voxel: int
    max_voxels: int
    connectivity: int = 4
    count_mode: str = STANDARD

    def __post_init__(self):
        size = tuple(float(s) for s in self.voxel_size)
        if len(size) not in (2, 3):
            raise ValueError("voxel_size must be (l, w) or (l, w, h)")
        if any(s <= 0 for s in size):
            raise ValueError("voxel sizes must be positive")
        object.__setattr__(self, "voxel_size", size)
        for name in ("x_range", "y_range", "z_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} must satisfy min < max")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.max_points_per_voxel < 1:
            raise ValueError("max_points_per_voxel must be >= 1")
        if self.max_voxels < 1:
            raise ValueError("max_voxels must be >= 1")
        if self.connectivity not in (4, 6):
            raise ValueError("connectivity must be 4 or 6")
        if self.connectivity == 6 and self.pillar_mode:
            raise ValueError("6-connectivity requires voxel mode (z size)")
        if self.count_mode not in (STANDARD, QUARTER):
            raise ValueError(f"unknown count_mode {self.count_mode!r}")

    @property
    def pillar_mode(self):
        return len(self.voxel_size) == 2

    @property
    def slot_names(self):
        return VOXEL_SLOTS if self.connectivity == 6 else PILLAR_SLOTS

    def coarsened(self):
        """Same config with the X-Y cell doubled (second-resolution grid)."""
        size = (self.voxel_size[0] * 2.0, self.voxel_size[1] * 2.0) + tuple(
            self.voxel_size[2:]
        )
        return GridConfig(
            voxel_size=size,
            x_range=self.x_range,
            y_range=self.y_range,
            z_range=self.z_range,
            max_points_per_voxel=self.max_points_per_voxel,
            max_voxels=self.max_voxels,
            connectivity=self.connectivity,
            count_mode=self.count_mode,
        )


@dataclass(frozen=True)
class VoxelRecord:
    cell: tuple
    point_indices: np.ndarray
    count: int


class VoxelGrid:
    """Sparse map from integer cells to point-index groups, insertion ordered.

    Voxel ids are insertion ranks 0..V-1. Point indices are stored as one
    flat array sliced by offsets, keeping the hot paths allocation-free.
    """

    def __init__(self, config, cells, counts, point_offsets, point_indices):
        self.config = config
        self.cells = np.asarray(cells, dtype=np.int32).reshape(-1, 3)
        self.counts = np.asarray(counts, dtype=np.int32)
        self.point_offsets = np.asarray(point_offsets, dtype=np.int64)
        self.point_indices = np.asarray(point_indices, dtype=np.int64)
        self._cell_index = None

    def __len__(self):
        return self.cells.shape[0]

    @property
    def insertion_order(self):
        return np.arange(len(self), dtype=np.int64)

    def points_of(self, vid):
        lo, hi = self.point_offsets[vid], self.point_offsets[vid + 1]
        return self.point_indices[lo:hi]

    def record(self, vid):
        return VoxelRecord(
            cell=tuple(int(c) for c in self.cells[vid]),
            point_indices=self.points_of(vid),
            count=int(self.counts[vid]),
        )

    def voxel_id_at(self, cell):
        if self._cell_index is None:
            self._cell_index = {
                tuple(int(v) for v in c): i for i, c in enumerate(self.cells)
            }
        return self._cell_index.get(tuple(int(v) for v in cell))


class NeighborGraph:
    """Per-voxel neighbor slots over non-empty voxels; -1 marks absent."""

    def __init__(self, slots, slot_names):
        self.slots = np.asarray(slots, dtype=np.int32).reshape(-1, len(slot_names))
        self.slot_names = tuple(slot_names)

    def __len__(self):
        return self.slots.shape[0]

    @property
    def n_slots(self):
        return self.slots.shape[1]

    def neighbors_of(self, vid):
        row = self.slots[vid]
        return row[row >= 0]


class ComponentLabels:
    def __init__(self, labels, n_components):
        self.labels = np.asarray(labels, dtype=np.int32)
        self.n_components = int(n_components)

    def __getitem__(self, vid):
        return int(self.labels[vid])

    def same(self, a, b):
        return self.labels[a] == self.labels[b]


def _pack_cells(cx, cy, cz):
    for axis, c in (("x", cx), ("y", cy), ("z", cz)):
        if c.size and int(c.max()) >= _AXIS_LIMIT:
            raise ValueError(
                f"grid too fine along {axis}: more than {_AXIS_LIMIT} cells"
            )
    return (
        (cx.astype(np.int64) << (2 * _AXIS_BITS))
        | (cy.astype(np.int64) << _AXIS_BITS)
        | cz.astype(np.int64)
    )


def _unpack_cells(keys):
    mask = (1 << _AXIS_BITS) - 1
    cx = keys >> (2 * _AXIS_BITS)
    cy = (keys >> _AXIS_BITS) & mask
    cz = keys & mask
    return np.stack([cx, cy, cz], axis=1).astype(np.int32)


def point_cells(cloud, config):
    """(in_range_indices, packed cell keys) for every in-range point."""
    xyz = cloud.xyz.astype(np.float64)
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    (x0, x1), (y0, y1), (z0, z1) = config.x_range, config.y_range, config.z_range
    ok = (x >= x0) & (x < x1) & (y >= y0) & (y < y1) & (z >= z0) & (z < z1)
    idx = np.nonzero(ok)[0]
    sx, sy = config.voxel_size[0], config.voxel_size[1]
    cx = np.floor((x[idx] - x0) / sx).astype(np.int64)
    cy = np.floor((y[idx] - y0) / sy).astype(np.int64)
    if config.pillar_mode:
        cz = np.zeros_like(cx)
    else:
        cz = np.floor((z[idx] - z0) / config.voxel_size[2]).astype(np.int64)
    return idx, _pack_cells(cx, cy, cz)


def build_neighbor_graph(cells, connectivity=4):
    """Symmetric slot adjacency over the given cells (left/right/back/front
    within the same z slice, plus down/up for 6-connectivity)."""
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
    keys = _pack_cells(cells[:, 0], cells[:, 1], cells[:, 2])
    order = np.argsort(keys)
    sorted_keys = keys[order]
    deltas = [
        (-(1 << (2 * _AXIS_BITS)), cells[:, 0] > 0),
        (+(1 << (2 * _AXIS_BITS)), np.ones(len(cells), dtype=bool)),
        (-(1 << _AXIS_BITS), cells[:, 1] > 0),
        (+(1 << _AXIS_BITS), np.ones(len(cells), dtype=bool)),
    ]
    if connectivity == 6:
        deltas += [
            (-1, cells[:, 2] > 0),
            (+1, np.ones(len(cells), dtype=bool)),
        ]
    n_slots = len(deltas)
    slots = np.full((len(cells), n_slots), -1, dtype=np.int32)
    for k, (delta, valid) in enumerate(deltas):
        cand = keys + delta
        pos = np.searchsorted(sorted_keys, cand)
        pos_c = np.minimum(pos, max(len(cells) - 1, 0))
        found = valid & (pos < len(cells))
        if len(cells):
            found &= sorted_keys[pos_c] == cand
        slots[found, k] = order[pos_c[found]]
    names = VOXEL_SLOTS if connectivity == 6 else PILLAR_SLOTS
    return NeighborGraph(slots, names)


def partition(cloud, config):
    """One-traversal partition into (VoxelGrid, NeighborGraph)."""
    idx, keys = point_cells(cloud, config)
    if idx.size == 0:
        empty = VoxelGrid(
            config,
            np.zeros((0, 3), np.int32),
            np.zeros(0, np.int32),
            np.zeros(1, np.int64),
            np.zeros(0, np.int64),
        )
        return empty, build_neighbor_graph(empty.cells, config.connectivity)

    uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    # insertion rank = order of first appearance in point order
    appearance = np.argsort(first, kind="stable")
    rank = np.empty(uniq.size, dtype=np.int64)
    rank[appearance] = np.arange(uniq.size)
    n_voxels = min(uniq.size, config.max_voxels)

    point_rank = rank[inverse]
    admitted = point_rank < n_voxels
    p_idx = idx[admitted]
    v_rank = point_rank[admitted]

    # within-voxel arrival position; points are already in file order
    by_voxel = np.argsort(v_rank, kind="stable")
    sorted_rank = v_rank[by_voxel]
    group_start = np.searchsorted(sorted_rank, np.arange(n_voxels))
    pos = np.arange(sorted_rank.size) - group_start[sorted_rank]
    keep = pos < config.max_points_per_voxel

    sizes = np.bincount(sorted_rank, minlength=n_voxels)
    counts = np.minimum(sizes, config.max_points_per_voxel).astype(np.int32)
    flat = p_idx[by_voxel][keep]
    offsets = np.zeros(n_voxels + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])

    cells = _unpack_cells(uniq[appearance][:n_voxels])
    grid = VoxelGrid(config, cells, counts, offsets, flat)
    graph = build_neighbor_graph(cells, config.connectivity)
    return grid, graph


def connected_components(graph):
    """Breadth-first component labels, numbered by insertion order."""
    n = len(graph)
    labels = np.full(n, -1, dtype=np.int32)
    slots = graph.slots
    comp = 0
    for start in range(n):
        if labels[start] >= 0:
            continue
        labels[start] = comp
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for u in slots[v]:
                if u >= 0 and labels[u] < 0:
                    labels[u] = comp
                    queue.append(u)
        comp += 1
    return ComponentLabels(labels, comp)
