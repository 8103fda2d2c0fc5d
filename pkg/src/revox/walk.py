"""Biased random walk that reassigns each voxel's neighbor slots.

Every occupied neighbor slot spawns one walk. The step budget is fixed once
from the slot's starting voxel: the fewer points it holds, the more steps it
gets. Each step re-evaluates a move/stay gate at the current voxel (sparser
voxels move more readily) and, when the gate passes, transitions to a
non-empty adjacent voxel with probability proportional to its point count.
A walk that arrives at a voxel holding the maximum number of points stops
moving for its remaining steps.

Walks are confined to the connected component of their starting voxel by
construction, since every transition follows a recorded adjacency edge.
"""

from dataclasses import dataclass

import numpy as np

from . import rng
from ._kernels import HAS_NUMBA, set_threads
from .grid import QUARTER, STANDARD

if HAS_NUMBA:
    from ._kernels import walk_kernel


def effective_count(count, mode=STANDARD):
    """Point count as used for gate probabilities and step budgets."""
    count = int(count)
    if count < 1:
        raise ValueError("count must be >= 1")
    if mode == QUARTER:
        return -(-count // 4)
    if mode == STANDARD:
        return count
    raise ValueError(f"unknown count mode {mode!r}")


def _effective_counts(counts, mode):
    if mode == QUARTER:
        return -(-counts // 4)
    return counts


@dataclass(frozen=True)
class WalkPlan:
    move_probability: float
    steps: int


def walk_plan(count, n_max, mode=STANDARD):
    """Gate probability and step budget for a walk starting on `count` points."""
    if count > n_max:
        raise ValueError(f"count {count} exceeds the per-voxel cap {n_max}")
    c = effective_count(count, mode)
    m = effective_count(n_max, mode)
    return WalkPlan(move_probability=1.0 / c, steps=m - c)


@dataclass(frozen=True)
class TransitionDistribution:
    ids: np.ndarray
    probabilities: np.ndarray

    def __len__(self):
        return len(self.ids)

    @property
    def empty(self):
        return len(self.ids) == 0


def transition_distribution(vid, graph, grid):
    """Count-proportional distribution over the non-empty neighbors of vid."""
    row = graph.slots[vid]
    ids = row[row >= 0]
    if ids.size == 0:
        return TransitionDistribution(ids.astype(np.int32), np.zeros(0))
    weights = grid.counts[ids].astype(np.float64)
    return TransitionDistribution(ids, weights / weights.sum())


def sample_transition(dist, u):
    """Cumulative-sum inversion in fixed slot order; u in [0, 1)."""
    cum = np.cumsum(dist.probabilities)
    k = min(int(np.searchsorted(cum, u, side="right")), len(dist.ids) - 1)
    return int(dist.ids[k])


class WalkTrace:
    """Visited voxel ids, one entry per step plus the start; repeats mark
    steps where the walk stayed put."""

    def __init__(self, visited, resolutions=None):
        self.visited = np.asarray(visited, dtype=np.int32)
        self.resolutions = (
            None if resolutions is None else np.asarray(resolutions, dtype=np.uint8)
        )

    @property
    def start(self):
        return int(self.visited[0])

    @property
    def final(self):
        return int(self.visited[-1])

    def __len__(self):
        return len(self.visited)


class Reconfiguration:
    """Final neighbor assignment per (center voxel, slot), with walk traces.

    finals[v, k] is the voxel id the k-th slot ended on, or -1 where the
    slot was empty to begin with. final_tags carries the resolution tag
    (0 fine, 1 coarse) when produced by the multi-resolution walk.
    """

    def __init__(self, finals, seed, walk_centers, walk_slots, walk_steps,
                 trace_ids, final_tags=None, trace_tags=None):
        self.finals = finals
        self.final_tags = final_tags
        self.seed = int(seed)
        self.walk_centers = walk_centers
        self.walk_slots = walk_slots
        self.walk_steps = walk_steps
        self._trace_ids = trace_ids
        self._trace_tags = trace_tags
        self._rows = None

    @property
    def _row_of(self):
        if self._rows is None:
            self._rows = np.full(self.finals.shape, -1, dtype=np.int64)
            self._rows[self.walk_centers, self.walk_slots] = np.arange(
                len(self.walk_centers)
            )
        return self._rows

    def __len__(self):
        return self.finals.shape[0]

    @property
    def n_slots(self):
        return self.finals.shape[1]

    @property
    def tagged(self):
        return self.final_tags is not None

    def final(self, vid, slot):
        f = int(self.finals[vid, slot])
        return None if f < 0 else f

    def trace(self, vid, slot):
        row = self._row_of[vid, slot]
        if row < 0:
            return None
        n = int(self.walk_steps[row]) + 1
        tags = None if self._trace_tags is None else self._trace_tags[row, :n]
        return WalkTrace(self._trace_ids[row, :n], tags)

    def present(self):
        return self.finals >= 0


def _walk_numpy(seed, centers, slots, start, budget, counts, move_p, nb,
                cum, tot, n_max, trace, final):
    """Vectorized fallback, bit-identical to the JIT kernel."""
    base = rng.hash_words(seed, centers, slots)
    cur = start.copy()
    max_steps = int(budget.max()) if budget.size else 0
    for t in range(max_steps):
        act = np.nonzero(budget > t)[0]
        pos = cur[act]
        can = (counts[pos] < n_max) & (tot[pos] > 0.0)
        u = rng.to_unit(rng.fold(base[act], t))
        p = move_p[pos]
        go = can & (u < p)
        rows = act[go]
        if rows.size:
            frm = cur[rows]
            r = (u[go] / p[go]) * tot[frm]
            sel = (cum[frm] > r[:, None]).argmax(axis=1)
            cur[rows] = nb[frm, sel]
        trace[act, t + 1] = cur[act]
    final[:] = cur


def reconfigure(grid, graph, seed=0, threads=None):
    """Run one biased walk per occupied neighbor slot; deterministic in seed.

    Results are independent of `threads` and of evaluation order: the single
    variate spent on a step is keyed by (seed, center voxel, slot, step).
    """
    n_voxels = len(grid)
    n_slots = graph.n_slots
    counts = grid.counts.astype(np.int64)
    n_max = grid.config.max_points_per_voxel
    mode = grid.config.count_mode
    eff = _effective_counts(counts, mode)
    m_eff = effective_count(n_max, mode)
    move_p = 1.0 / eff
    step_of = m_eff - eff  # budget granted to walks that START on a voxel

    nb = graph.slots.astype(np.int64)
    weights = np.where(nb >= 0, counts[np.clip(nb, 0, None)], 0).astype(np.float64)
    cum = np.cumsum(weights, axis=1)
    tot = cum[:, -1] if n_voxels else np.zeros(0)

    centers, slotk = np.nonzero(nb >= 0)
    start = nb[centers, slotk]
    budget = step_of[start]
    n_walks = len(centers)
    max_budget = int(budget.max()) if n_walks else 0

    # rows are only meaningful through budget+1 entries; padding stays zero
    trace_ids = np.zeros((n_walks, max_budget + 1), dtype=np.int32)
    final = start.copy()
    if n_walks:
        trace_ids[:, 0] = start
        useed = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
        if HAS_NUMBA:
            set_threads(threads)
            walk_kernel(useed, centers, slotk, start, budget, counts, move_p,
                        nb, cum, tot, n_max, trace_ids, final)
        else:
            _walk_numpy(useed, centers, slotk, start, budget, counts, move_p,
                        nb, cum, tot, n_max, trace_ids, final)

    finals = np.full((n_voxels, n_slots), -1, dtype=np.int32)
    finals[centers, slotk] = final
    return Reconfiguration(
        finals=finals,
        seed=seed,
        walk_centers=centers,
        walk_slots=slotk,
        walk_steps=budget,
        trace_ids=trace_ids,
    )
