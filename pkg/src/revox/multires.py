"""Two-resolution partition and the inter-resolution random walk.

The coarse grid doubles the X-Y cell, so each coarse voxel covers up to four
fine voxels (its children). Coarse voxels are resampled down to the fine
per-voxel point cap, which lifts sparse regions toward a usable point budget
without inflating dense ones. Walks move inside one resolution by the usual
count-proportional rule and occasionally jump: fine -> parent with
probability 0.25 * gate, coarse -> a count-weighted child with probability
0.5 * gate, keeping the original resolution the more likely home.
"""

from dataclasses import dataclass

import numpy as np

from . import rng
from ._kernels import HAS_NUMBA, set_threads
from .grid import VoxelGrid, build_neighbor_graph, partition, _pack_cells
from .walk import Reconfiguration, effective_count, _effective_counts

if HAS_NUMBA:
    from ._kernels import multires_kernel

FINE = "fine"
COARSE = "coarse"
_TAG = {FINE: 0, COARSE: 1}


@dataclass(frozen=True)
class ResolutionTaggedSlot:
    voxel_id: int
    resolution: str


@dataclass(frozen=True)
class InterResPlan:
    move_probability: float
    up_probability: float
    down_probability: float


def inter_res_plan(count, resolution, n_max):
    """Gate and resolution-jump probabilities for one voxel.

    Coarse gates divide the count by four (rounded up) so a full coarse
    voxel behaves like its four fine children would.
    """
    count = int(count)
    if not 1 <= count <= n_max:
        raise ValueError(f"count {count} outside [1, {n_max}]")
    if resolution == FINE:
        p = 1.0 / count
        return InterResPlan(p, 0.25 * p, 0.0)
    if resolution == COARSE:
        p = 1.0 / (-(-count // 4))
        return InterResPlan(p, 0.0, 0.5 * p)
    raise ValueError(f"unknown resolution {resolution!r}")


class MultiResGrid:
    """Paired fine/coarse grids with parent/children maps.

    children_of is (Vc, 4) int32 padded with -1, listing fine children in
    creation order. coarse_pre_counts holds the pre-resampling point totals;
    the coarse grid itself stores the resampled (capped) point sets.
    """

    def __init__(self, fine, coarse, fine_graph, coarse_graph, parent_of,
                 children_of, coarse_pre_counts, seed):
        self.fine = fine
        self.coarse = coarse
        self.fine_graph = fine_graph
        self.coarse_graph = coarse_graph
        self.parent_of = parent_of
        self.children_of = children_of
        self.coarse_pre_counts = coarse_pre_counts
        self.seed = int(seed)

    def children_list(self, coarse_id):
        row = self.children_of[coarse_id]
        return row[row >= 0]


def partition_multires(cloud, config, seed=0):
    """Fine partition plus the derived coarse grid, in one pass over voxels."""
    fine, fine_graph = partition(cloud, config)
    n_fine = len(fine)
    n_max = config.max_points_per_voxel

    coarse_cells_of_fine = fine.cells.copy()
    coarse_cells_of_fine[:, 0] //= 2
    coarse_cells_of_fine[:, 1] //= 2

    if n_fine == 0:
        coarse = VoxelGrid(
            config.coarsened(),
            np.zeros((0, 3), np.int32), np.zeros(0, np.int32),
            np.zeros(1, np.int64), np.zeros(0, np.int64),
        )
        return MultiResGrid(
            fine, coarse, fine_graph,
            build_neighbor_graph(coarse.cells, config.connectivity),
            np.zeros(0, np.int32), np.zeros((0, 4), np.int32),
            np.zeros(0, np.int32), seed,
        )

    # coarse creation order = first fine child's creation order
    packed = _pack_cells(
        coarse_cells_of_fine[:, 0].astype(np.int64),
        coarse_cells_of_fine[:, 1].astype(np.int64),
        coarse_cells_of_fine[:, 2].astype(np.int64),
    )
    uniq, first, inverse = np.unique(packed, return_index=True, return_inverse=True)
    appearance = np.argsort(first, kind="stable")
    rank = np.empty(uniq.size, dtype=np.int64)
    rank[appearance] = np.arange(uniq.size)
    parent_of = rank[inverse].astype(np.int32)
    n_coarse = uniq.size
    coarse_cells = coarse_cells_of_fine[first[appearance]]

    order = np.argsort(parent_of, kind="stable")  # fine ids grouped by parent
    grouped = parent_of[order].astype(np.int64)
    starts = np.searchsorted(grouped, np.arange(n_coarse))
    child_pos = np.arange(n_fine) - starts[grouped]
    children_of = np.full((n_coarse, 4), -1, dtype=np.int32)
    children_of[grouped, child_pos] = order

    pre_counts = np.bincount(parent_of, weights=fine.counts, minlength=n_coarse)
    pre_counts = pre_counts.astype(np.int32)

    # candidate points per coarse voxel: children's stored points, child order
    cand_chunks = [fine.points_of(f) for f in order]
    cand = np.concatenate(cand_chunks) if cand_chunks else np.zeros(0, np.int64)
    cand_parent = np.repeat(parent_of[order], fine.counts[order])
    group_start = np.searchsorted(cand_parent, np.arange(n_coarse))
    cand_pos = np.arange(cand.size) - group_start[cand_parent]

    # uniform n-subset per coarse voxel: keep the n smallest keyed variates
    u = rng.uniform(seed, rng.RESAMPLE, cand_parent, cand_pos)
    by_u = np.lexsort((u, cand_parent))
    sel_rank = np.arange(cand.size) - group_start[cand_parent[by_u]]
    selected = np.zeros(cand.size, dtype=bool)
    selected[by_u[sel_rank < n_max]] = True

    coarse_counts = np.minimum(pre_counts, n_max).astype(np.int32)
    offsets = np.zeros(n_coarse + 1, dtype=np.int64)
    np.cumsum(coarse_counts, out=offsets[1:])
    coarse = VoxelGrid(config.coarsened(), coarse_cells, coarse_counts,
                       offsets, cand[selected])
    coarse_graph = build_neighbor_graph(coarse_cells, config.connectivity)
    return MultiResGrid(fine, coarse, fine_graph, coarse_graph, parent_of,
                        children_of, pre_counts, seed)


def _multires_numpy(seed, centers, slots, start, budget, counts_f, counts_c,
                    inv_f, inv_c, nb_f, cum_f, tot_f, nb_c, cum_c, tot_c,
                    parent_of, children_of, child_cum, child_tot, n_max,
                    trace_id, trace_tag, final_id, final_tag):
    """Vectorized fallback, bit-identical to the JIT kernel."""
    base = rng.hash_words(seed, centers, slots)
    cur = start.copy()
    tag = np.zeros(len(start), dtype=np.uint8)
    max_steps = int(budget.max()) if budget.size else 0
    for t in range(max_steps):
        alive = np.nonzero(budget > t)[0]
        u_all = rng.to_unit(rng.fold(base[alive], t))
        tag0 = tag[alive].copy()  # branch on the tag at step entry

        af = alive[tag0 == 0]
        uf = u_all[tag0 == 0]
        if af.size:
            pf = cur[af]
            movable = counts_f[pf] < n_max
            p_jump = 0.25 * inv_f[pf]
            up = movable & (uf < p_jump)
            rows = af[up]
            cur[rows] = parent_of[cur[rows]]
            tag[rows] = 1
            rest = movable & ~up
            if rest.any():
                u2 = (uf[rest] - p_jump[rest]) / (1.0 - p_jump[rest])
                ps = cur[af[rest]]
                p = inv_f[ps]
                go = (u2 < p) & (tot_f[ps] > 0.0)
                rows = af[rest][go]
                if rows.size:
                    frm = cur[rows]
                    r = (u2[go] / p[go]) * tot_f[frm]
                    sel = (cum_f[frm] > r[:, None]).argmax(axis=1)
                    cur[rows] = nb_f[frm, sel]

        ac = alive[tag0 == 1]
        uc = u_all[tag0 == 1]
        if ac.size:
            pc = cur[ac]
            movable = counts_c[pc] < n_max
            p_jump = 0.5 * inv_c[pc]
            down = movable & (uc < p_jump)
            rows = ac[down]
            if rows.size:
                frm = cur[rows]
                r = (uc[down] / p_jump[down]) * child_tot[frm]
                sel = (child_cum[frm] > r[:, None]).argmax(axis=1)
                cur[rows] = children_of[frm, sel]
                tag[rows] = 0
            rest = movable & ~down
            if rest.any():
                u2 = (uc[rest] - p_jump[rest]) / (1.0 - p_jump[rest])
                ps = cur[ac[rest]]
                p = inv_c[ps]
                go = (u2 < p) & (tot_c[ps] > 0.0)
                rows = ac[rest][go]
                if rows.size:
                    frm = cur[rows]
                    r = (u2[go] / p[go]) * tot_c[frm]
                    sel = (cum_c[frm] > r[:, None]).argmax(axis=1)
                    cur[rows] = nb_c[frm, sel]

        trace_id[alive, t + 1] = cur[alive]
        trace_tag[alive, t + 1] = tag[alive]
    final_id[:] = cur
    final_tag[:] = tag


def reconfigure_multires(mgrid, seed=0, threads=None):
    """Inter-resolution walk over every occupied fine neighbor slot.

    Returns a Reconfiguration whose final_tags mark the resolution of each
    slot's final voxel (0 fine, 1 coarse). Deterministic in seed and
    independent of thread count.
    """
    fine, coarse = mgrid.fine, mgrid.coarse
    config = fine.config
    n_max = config.max_points_per_voxel
    counts_f = fine.counts.astype(np.int64)
    counts_c = coarse.counts.astype(np.int64)
    inv_f = 1.0 / counts_f if len(fine) else np.zeros(0)
    inv_c = 1.0 / (-(-counts_c // 4)) if len(coarse) else np.zeros(0)

    def _edges(graph, counts):
        nb = graph.slots.astype(np.int64)
        w = np.where(nb >= 0, counts[np.clip(nb, 0, None)], 0).astype(np.float64)
        cum = np.cumsum(w, axis=1)
        tot = cum[:, -1] if len(nb) else np.zeros(0)
        return nb, cum, tot

    nb_f, cum_f, tot_f = _edges(mgrid.fine_graph, counts_f)
    nb_c, cum_c, tot_c = _edges(mgrid.coarse_graph, counts_c)

    children_of = mgrid.children_of.astype(np.int64)
    cw = np.where(children_of >= 0,
                  counts_f[np.clip(children_of, 0, None)], 0).astype(np.float64)
    child_cum = np.cumsum(cw, axis=1)
    child_tot = child_cum[:, -1] if len(children_of) else np.zeros(0)

    eff = _effective_counts(counts_f, config.count_mode)
    m_eff = effective_count(n_max, config.count_mode)
    step_of = m_eff - eff

    centers, slotk = np.nonzero(nb_f >= 0)
    start = nb_f[centers, slotk]
    budget = step_of[start]
    n_walks = len(centers)
    max_budget = int(budget.max()) if n_walks else 0

    # rows are only meaningful through budget+1 entries; padding stays zero
    trace_ids = np.zeros((n_walks, max_budget + 1), dtype=np.int32)
    trace_tags = np.zeros((n_walks, max_budget + 1), dtype=np.uint8)
    final_id = start.copy()
    final_tag = np.zeros(n_walks, dtype=np.uint8)
    if n_walks:
        trace_ids[:, 0] = start
        useed = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
        parent_of = mgrid.parent_of.astype(np.int64)
        args = (useed, centers, slotk, start, budget, counts_f, counts_c,
                inv_f, inv_c, nb_f, cum_f, tot_f, nb_c, cum_c, tot_c,
                parent_of, children_of, child_cum, child_tot, n_max,
                trace_ids, trace_tags, final_id, final_tag)
        if HAS_NUMBA:
            set_threads(threads)
            multires_kernel(*args)
        else:
            _multires_numpy(*args)

    n_slots = mgrid.fine_graph.n_slots
    finals = np.full((len(fine), n_slots), -1, dtype=np.int32)
    final_tags = np.zeros((len(fine), n_slots), dtype=np.uint8)
    finals[centers, slotk] = final_id
    final_tags[centers, slotk] = final_tag
    return Reconfiguration(
        finals=finals,
        seed=seed,
        walk_centers=centers,
        walk_slots=slotk,
        walk_steps=budget,
        trace_ids=trace_ids,
        final_tags=final_tags,
        trace_tags=trace_tags,
    )


def tagged_slot(reconfig, vid, slot):
    """ResolutionTaggedSlot for (vid, slot), or None where the slot is empty."""
    f = reconfig.final(vid, slot)
    if f is None:
        return None
    tag = COARSE if reconfig.final_tags is not None and reconfig.final_tags[vid, slot] else FINE
    return ResolutionTaggedSlot(voxel_id=f, resolution=tag)
