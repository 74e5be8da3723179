"""Counter-based random streams.

Every random operation in the package draws from a Philox generator keyed by
(master seed, purpose, *indices).  Philox is counter-based, so substreams for
different purposes or different trajectories never overlap and parallel work
reproduces the sequential results.
"""

import numpy as np

# purpose tags for substream derivation
SIM = 1
COVER = 2
KERNEL = 3
LIBRARY = 4
EVAL = 5
VERIFY = 6
INIT = 7


def substream(seed, *path):
    """Return an independent Generator for the given seed and integer path."""
    ss = np.random.SeedSequence(entropy=int(seed),
                                spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
