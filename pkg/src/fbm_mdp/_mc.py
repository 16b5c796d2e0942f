"""Chunked Monte Carlo fan-out.

Paths are split into fixed-size chunks ``[first, first + n)``; every path draws
from its own random stream, so results do not depend on the chunk size or on
the number of worker threads.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

DEFAULT_CHUNK = 100


def default_workers():
    env = os.environ.get("FBM_MDP_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def map_chunks(fn, n_paths, chunk=DEFAULT_CHUNK, workers=None):
    """Call ``fn(first, n)`` on consecutive chunks; results come back in order."""
    jobs = [(s, min(chunk, n_paths - s)) for s in range(0, n_paths, chunk)]
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [fn(s, n) for s, n in jobs]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda j: fn(*j), jobs))


def concat(chunks):
    return np.concatenate([np.atleast_1d(c) for c in chunks])


def mean_stderr(samples):
    s = np.asarray(samples, dtype=float)
    n = s.shape[0]
    se = s.std(ddof=1, axis=0) / np.sqrt(n) if n > 1 else np.full(s.shape[1:], np.nan)
    return s.mean(axis=0), se
