"""JIT walk kernels. Bit-identical numpy fallbacks live in walk/multires.

Each walk step consumes exactly one counter-based variate keyed by
(seed, center voxel, slot, step); the move/stay gate and the transition
choice are carved out of that single uniform by interval rescaling, which
preserves the stated marginal probabilities exactly.
"""

import os

import numpy as np

_U64 = np.uint64
_SEED0 = _U64(0x8C5F9F3B2E61AD47)
_GOLDEN = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)
_SHIFT11 = _U64(11)
_INV_2_53 = 2.0 ** -53

HAS_NUMBA = False
if not os.environ.get("REVOX_NO_NUMBA"):
    try:
        import warnings

        with warnings.catch_warnings():
            # harmless threading-layer probe noise (e.g. old TBB versions)
            warnings.simplefilter("ignore")
            import numba
            from numba import njit, prange

        HAS_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        pass


def set_threads(threads):
    """Cap JIT worker threads; None restores the full pool. Thread count
    never changes results, only wall time."""
    if HAS_NUMBA:
        limit = numba.config.NUMBA_NUM_THREADS
        if threads is None:
            threads = limit
        numba.set_num_threads(max(1, min(threads, limit)))


if HAS_NUMBA:

    @njit(cache=True, inline="always")
    def _fold(h, w):
        h = h ^ w
        h = h + _GOLDEN
        h = (h ^ (h >> _U64(30))) * _MIX1
        h = (h ^ (h >> _U64(27))) * _MIX2
        return h ^ (h >> _U64(31))

    @njit(cache=True, inline="always")
    def _walk_base(seed, center, slot):
        # matches rng.hash_words(seed, center, slot)
        h = _fold(_SEED0, seed)
        h = _fold(h, center)
        return _fold(h, slot)

    @njit(cache=True, inline="always")
    def _step_unit(base, t):
        return (_fold(base, _U64(t)) >> _SHIFT11) * _INV_2_53

    @njit(cache=True, parallel=True)
    def walk_kernel(seed, centers, slots, start, budget, counts, move_p,
                    nb, cum, tot, n_max, trace, final):
        n_walks = start.shape[0]
        n_slots = nb.shape[1]
        useed = _U64(seed)
        for a in prange(n_walks):
            base = _walk_base(useed, _U64(centers[a]), _U64(slots[a]))
            cur = start[a]
            steps = budget[a]
            trace[a, 0] = cur
            for t in range(steps):
                if counts[cur] < n_max and tot[cur] > 0.0:
                    u = _step_unit(base, t)
                    p = move_p[cur]
                    if u < p:
                        r = (u / p) * tot[cur]
                        for k in range(n_slots):
                            if cum[cur, k] > r:
                                cur = nb[cur, k]
                                break
                trace[a, t + 1] = cur
            final[a] = cur

    @njit(cache=True, parallel=True)
    def multires_kernel(seed, centers, slots, start, budget, counts_f,
                        counts_c, inv_f, inv_c, nb_f, cum_f, tot_f, nb_c,
                        cum_c, tot_c, parent_of, children_of, child_cum,
                        child_tot, n_max, trace_id, trace_tag, final_id,
                        final_tag):
        n_walks = start.shape[0]
        n_slots = nb_f.shape[1]
        useed = _U64(seed)
        for a in prange(n_walks):
            base = _walk_base(useed, _U64(centers[a]), _U64(slots[a]))
            cur = start[a]
            tag = 0
            steps = budget[a]
            trace_id[a, 0] = cur
            trace_tag[a, 0] = 0
            for t in range(steps):
                if tag == 0:
                    if counts_f[cur] < n_max:
                        u = _step_unit(base, t)
                        p_jump = 0.25 * inv_f[cur]
                        if u < p_jump:
                            cur = parent_of[cur]
                            tag = 1
                        else:
                            u2 = (u - p_jump) / (1.0 - p_jump)
                            p = inv_f[cur]
                            if u2 < p and tot_f[cur] > 0.0:
                                r = (u2 / p) * tot_f[cur]
                                for k in range(n_slots):
                                    if cum_f[cur, k] > r:
                                        cur = nb_f[cur, k]
                                        break
                else:
                    if counts_c[cur] < n_max:
                        u = _step_unit(base, t)
                        p_jump = 0.5 * inv_c[cur]
                        if u < p_jump:
                            r = (u / p_jump) * child_tot[cur]
                            for k in range(4):
                                if child_cum[cur, k] > r:
                                    cur = children_of[cur, k]
                                    break
                            tag = 0
                        else:
                            u2 = (u - p_jump) / (1.0 - p_jump)
                            p = inv_c[cur]
                            if u2 < p and tot_c[cur] > 0.0:
                                r = (u2 / p) * tot_c[cur]
                                for k in range(n_slots):
                                    if cum_c[cur, k] > r:
                                        cur = nb_c[cur, k]
                                        break
                trace_id[a, t + 1] = cur
                trace_tag[a, t + 1] = tag
            final_id[a] = cur
            final_tag[a] = tag
