"""Deterministic RNG derivation for reproducible Monte Carlo drops.

Every random draw in the package flows through a generator built by
``rng_for(master_seed, *key)``.  The key is a tuple of small integers that
names the stream (drop index, stream id, ...), so results never depend on
execution order or worker count.
"""

import numpy as np

# stream ids used inside one drop
UE_POSITIONS = 0
RIS_POSITIONS = 1
ACTIVE_SELECT = 2
LARGE_SCALE = 3
SMALL_SCALE = 4
PHASE_OFFSETS = 5
RIS_RANDOM_PHASES = 6


def rng_for(seed, *key):
    """Counter-based split: independent stream for each (seed, key).

    ``seed`` is an int or a tuple of ints, e.g. (master_seed, drop_index).
    """
    entropy = int(seed) if np.isscalar(seed) else [int(s) for s in seed]
    ss = np.random.SeedSequence(entropy=entropy,
                                spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)
