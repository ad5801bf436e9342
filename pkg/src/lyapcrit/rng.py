"""Counter-based random streams.

Every draw is fixed by (seed, stream). Streams use numpy's Philox generator
keyed through SeedSequence spawn keys, so results do not depend on how work
is split between threads.
"""

import numpy as np

# stream namespaces, one per consumer
DIRECT = 1
TAU = 2
XCHAIN = 3
YCHAIN = 4
OCCUPATION = 5
LADDER_DIRECT = 6
LADDER_J = 7
RENEWAL = 8
MC_ORACLE = 9
SAMPLE = 10


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for (seed, stream...)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))
