"""Counter-based deterministic random numbers.

Every variate is a pure function of a tuple of integer key words (seed,
voxel id, slot, step, stream tag, ...), so walks can be evaluated in any
order, chunked across threads, and still reproduce bit-exactly.

The mixer is the splitmix64 finalizer folded over the key words. It is not
cryptographic; it only needs to be fast, stateless, and statistically flat
enough for Monte Carlo use.
"""

import numpy as np

_U64 = np.uint64
_MASK = 0xFFFFFFFFFFFFFFFF
_GOLDEN = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)
_SEED0 = _U64(0x8C5F9F3B2E61AD47)
_INV_2_53 = float(2.0 ** -53)

# Stream tags keep draws from different decision points independent even
# when the rest of the key coincides.
GATE = 1       # move/stay gate inside a walk step
MOVE = 2       # neighbor selection after the gate passes
JUMP = 3       # resolution-jump decision (multi-resolution walks)
CHILD = 4      # child selection after a down-jump
RESAMPLE = 5   # coarse-voxel point resampling


def _as_u64(word):
    if isinstance(word, (int, np.integer)):
        return _U64(int(word) & _MASK)
    arr = np.asarray(word)
    return arr.astype(np.uint64, copy=False)


def fold(h, w):
    """Fold one more word into an existing hash state."""
    with np.errstate(over="ignore"):
        h = h ^ _as_u64(w)
        h = h + _GOLDEN
        h = (h ^ (h >> _U64(30))) * _MIX1
        h = (h ^ (h >> _U64(27))) * _MIX2
        return h ^ (h >> _U64(31))


def hash_words(*words):
    """Fold integer words (scalars or broadcastable arrays) into uint64."""
    h = _SEED0
    for w in words:
        h = fold(h, w)
    return h


def to_unit(h):
    """Map a uint64 hash to float64 in [0, 1)."""
    return np.asarray(h >> _U64(11)).astype(np.float64) * _INV_2_53


def uniform(*words):
    """Uniform float64 in [0, 1), a pure function of the key words."""
    return to_unit(hash_words(*words))
