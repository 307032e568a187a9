"""Reproducible random streams for parallel Monte Carlo.

Every stochastic stage draws from a Philox (counter-based) generator keyed by
the master seed plus a tuple of integer indices (stage, realization, step,
...).  Streams are therefore pure functions of their key, independent of how
work is split across processes, and block draws within one stream happen in a
fixed order.
"""

from __future__ import annotations

from multiprocessing import get_context

import numpy as np


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the (seed, *key) stream."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(seed) -> np.random.Generator:
    """Accept either an integer seed or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return substream(int(seed))


def parallel_map(fn, items, n_workers: int = 1):
    """Ordered map, optionally across processes.

    Results come back in input order, so reductions downstream are
    deterministic for any worker count.  `fn` must be picklable (module
    level) when n_workers > 1.
    """
    items = list(items)
    if n_workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    ctx = get_context()
    with ctx.Pool(processes=min(n_workers, len(items))) as pool:
        return pool.map(fn, items)
