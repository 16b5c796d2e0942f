"""Deterministic random streams.

Every random quantity in the package is drawn from a generator keyed by
``(seed, stream, index)``.  The key goes into a :class:`numpy.random.SeedSequence`
``spawn_key`` and feeds a counter-based Philox bit generator, so path ``k`` of a
Monte Carlo batch is identical whether it is produced alone, in a batch, or by
another worker.
"""

import numpy as np

# stream ids; keep stable, they are part of the reproducibility contract
FBM = 0
BM = 1
FAST_BM = 2
CONTROL = 3
FROZEN = 4
MISC = 9


def stream(seed, *key):
    """Return a Philox generator for ``seed`` and an integer key path."""
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def normals(seed, stream_id, n_paths, shape, first_path=0):
    """Standard normals of shape ``(n_paths, *shape)``, one stream per path."""
    out = np.empty((n_paths,) + tuple(shape))
    for p in range(n_paths):
        out[p] = stream(seed, stream_id, first_path + p).standard_normal(shape)
    return out
