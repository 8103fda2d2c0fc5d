"""Per-voxel feature decoration and center-plus-neighbors aggregation.

Two feature layouts are supported:
  second:  d, z, r                                  (width 3)
  pillars: d, z, t, x_c, y_c, z_c, x_p, y_p         (width 8)

d is the 3D Euclidean range from the sensor origin. The _c offsets are
relative to the arithmetic mean of the CENTER voxel's points and the _p
offsets to the center voxel's geometric cell center; reconfigured neighbor
points keep their own d/z/r/t but take offsets relative to the original
center, so the block stays anchored at its home location.

The learned parts of the aggregation (the shared-MLP transform and the
per-neighbor weights) are caller-supplied callables with plain defaults:
column-wise max over unmasked rows, and uniform 0.25 weights.
"""

from dataclasses import dataclass

import numpy as np

MODES = {"second": ("d", "z", "r"),
         "pillars": ("d", "z", "t", "x_c", "y_c", "z_c", "x_p", "y_p")}


@dataclass(frozen=True)
class FeatureSpec:
    mode: str = "pillars"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown feature mode {self.mode!r}")

    @property
    def feature_names(self):
        return MODES[self.mode]

    @property
    def width(self):
        return len(MODES[self.mode])


class PointFeatureBlock:
    """Zero-padded center rows plus 4 neighbor matrices with presence masks."""

    def __init__(self, voxel_id, center, center_mask, neighbors, neighbor_masks):
        self.voxel_id = int(voxel_id)
        self.center = center                  # (n, width)
        self.center_mask = center_mask        # (n,) bool
        self.neighbors = neighbors            # (4, n, width)
        self.neighbor_masks = neighbor_masks  # (4, n) bool


@dataclass(frozen=True)
class VoxelFeature:
    voxel_id: int
    vector: np.ndarray


def uniform_weights(center, center_mask):
    """Default neighbor weights: constant 0.25 each."""
    return np.full(4, 0.25)


def column_max(matrix, mask):
    """Default feature transform: column-wise max over unmasked rows."""
    if not mask.any():
        return np.zeros(matrix.shape[1])
    return matrix[mask].max(axis=0)


def _gather_rows(grid, n_max):
    """(V, n_max) point-index matrix, -1 padded, in stored order."""
    n_vox = len(grid)
    out = np.full((n_vox, n_max), -1, dtype=np.int64)
    if n_vox == 0:
        return out
    counts = grid.counts.astype(np.int64)
    rows = np.repeat(np.arange(n_vox), counts)
    cols = np.arange(counts.sum()) - np.repeat(grid.point_offsets[:-1], counts)
    out[rows, cols] = grid.point_indices
    return out


def _decorated(cloud, spec, mean_xyz, cell_center_xy, idx_matrix):
    """Feature rows for idx_matrix (V, n) against per-V center references."""
    V, n = idx_matrix.shape
    width = spec.width
    mask = idx_matrix >= 0
    safe = np.clip(idx_matrix, 0, None)
    pts = cloud.data.astype(np.float64)[safe]          # (V, n, 5)
    out = np.zeros((V, n, width))
    d = np.sqrt((pts[:, :, 0:3] ** 2).sum(axis=2))
    out[:, :, 0] = d
    out[:, :, 1] = pts[:, :, 2]
    if spec.mode == "second":
        out[:, :, 2] = pts[:, :, 3]
    else:
        out[:, :, 2] = pts[:, :, 4]
        out[:, :, 3:6] = pts[:, :, 0:3] - mean_xyz[:, None, :]
        out[:, :, 6:8] = pts[:, :, 0:2] - cell_center_xy[:, None, :]
    out[~mask] = 0.0
    return out, mask


def decorate(grid, reconfig, cloud, spec, mgrid=None):
    """PointFeatureBlocks for every voxel, neighbors per the reconfiguration.

    For tagged (multi-resolution) reconfigurations pass the MultiResGrid as
    mgrid; coarse finals then contribute their resampled point sets.
    """
    if reconfig.tagged and mgrid is None:
        raise ValueError("tagged reconfiguration requires the MultiResGrid")
    n_max = grid.config.max_points_per_voxel
    n_vox = len(grid)
    center_idx = _gather_rows(grid, n_max)

    xyz = cloud.xyz.astype(np.float64)
    counts = np.maximum(grid.counts.astype(np.float64), 1.0)
    cmask = center_idx >= 0
    safe = np.clip(center_idx, 0, None)
    sums = (xyz[safe] * cmask[:, :, None]).sum(axis=1)
    mean_xyz = sums / counts[:, None]

    sx, sy = grid.config.voxel_size[0], grid.config.voxel_size[1]
    x0, y0 = grid.config.x_range[0], grid.config.y_range[0]
    cell_center_xy = np.stack(
        [
            (grid.cells[:, 0].astype(np.float64) + 0.5) * sx + x0,
            (grid.cells[:, 1].astype(np.float64) + 0.5) * sy + y0,
        ],
        axis=1,
    )

    center_rows, center_mask = _decorated(cloud, spec, mean_xyz,
                                          cell_center_xy, center_idx)

    n_slots = reconfig.n_slots
    coarse_idx = None
    if reconfig.tagged:
        coarse_idx = _gather_rows(mgrid.coarse, n_max)

    nb_rows = np.zeros((n_vox, n_slots, n_max, spec.width))
    nb_masks = np.zeros((n_vox, n_slots, n_max), dtype=bool)
    for k in range(n_slots):
        finals = reconfig.finals[:, k].astype(np.int64)
        present = finals >= 0
        safe_f = np.clip(finals, 0, None)
        idx_k = center_idx[safe_f]
        if reconfig.tagged:
            is_coarse = present & (reconfig.final_tags[:, k] == 1)
            if is_coarse.any():
                idx_k = idx_k.copy()
                idx_k[is_coarse] = coarse_idx[safe_f[is_coarse]]
        idx_k[~present] = -1
        rows, mask = _decorated(cloud, spec, mean_xyz, cell_center_xy, idx_k)
        nb_rows[:, k] = rows
        nb_masks[:, k] = mask

    return [
        PointFeatureBlock(v, center_rows[v], center_mask[v],
                          nb_rows[v], nb_masks[v])
        for v in range(n_vox)
    ]


def encode_avg(block):
    """Mean over all unmasked rows of center and neighbors stacked together."""
    rows = [block.center[block.center_mask]]
    for k in range(block.neighbors.shape[0]):
        rows.append(block.neighbors[k][block.neighbor_masks[k]])
    stacked = np.concatenate(rows, axis=0)
    if stacked.shape[0] == 0:
        raise ValueError("cannot average an all-masked feature block")
    return VoxelFeature(block.voxel_id, stacked.mean(axis=0))


def encode_weighted(block, weight_fn=uniform_weights, transform=column_max):
    """concat(transform(center), transform(weighted neighbor sum)).

    weight_fn: (center, center_mask) -> 4 finite non-negative weights.
    transform: (matrix, mask) -> fixed-width vector.
    """
    if not block.center_mask.any():
        raise ValueError("cannot encode an all-masked feature block")
    w = np.asarray(weight_fn(block.center, block.center_mask), dtype=np.float64)
    if w.shape != (block.neighbors.shape[0],):
        raise ValueError(f"expected {block.neighbors.shape[0]} weights, got {w.shape}")
    if not np.isfinite(w).all() or (w < 0).any():
        raise ValueError("neighbor weights must be finite and non-negative")
    weighted = np.einsum("k,knw->nw", w, block.neighbors)
    any_mask = block.neighbor_masks.any(axis=0)
    left = np.asarray(transform(block.center, block.center_mask), dtype=np.float64)
    right = np.asarray(transform(weighted, any_mask), dtype=np.float64)
    return VoxelFeature(block.voxel_id, np.concatenate([left, right]))


def scatter(features, grid, shape):
    """Dense (H, W, width) map, indexed [cell_y, cell_x]; zeros elsewhere."""
    h, w = shape
    if not features:
        return np.zeros((h, w, 0))
    width = len(features[0].vector)
    dense = np.zeros((h, w, width))
    for feat in features:
        cx, cy = int(grid.cells[feat.voxel_id, 0]), int(grid.cells[feat.voxel_id, 1])
        if not (0 <= cx < w and 0 <= cy < h):
            raise ValueError(f"cell ({cx}, {cy}) outside map shape {shape}")
        dense[cy, cx] = feat.vector
    return dense
