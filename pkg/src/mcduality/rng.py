"""Deterministic, splittable random streams for path generation.

Path simulation is organized in fixed blocks of path indices.  Every block
owns a counter-based Philox generator derived from the master seed and the
block index, so the numbers drawn for block ``k`` do not depend on which
worker thread happens to fill it, nor on how many workers there are.  All
reductions downstream operate on fully materialized arrays in path-index
order, which makes every statistic bit-stable across worker counts.

The worker count defaults to 1 and can be overridden with the
``MCDUALITY_WORKERS`` environment variable.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

#: number of path indices per RNG block
BLOCK_SIZE = 4096

#: environment variable consulted for the default worker count
WORKERS_ENV = "MCDUALITY_WORKERS"


def worker_count(workers: int | None = None) -> int:
    """Resolve the effective worker count (argument beats environment)."""
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers < 1:
        raise ValueError(f"worker count must be >= 1, got {workers}")
    return workers


class RandomStream:
    """A labelled substream of a master seed.

    ``split(label)`` derives an independent child stream; ``block_rng(k)``
    returns the generator that owns path block ``k``.  Both operations are
    pure functions of ``(seed, key)``, so any two calls with equal arguments
    yield identical draws.
    """

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        if not 0 <= int(seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)

    def split(self, label: int) -> "RandomStream":
        """Derive the child stream with the given label."""
        return RandomStream(self.seed, self.key + (int(label),))

    def block_rng(self, block: int) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed,
                                    spawn_key=self.key + (int(block),))
        return np.random.Generator(np.random.Philox(ss))

    def standard_normals(self, paths: int, cols: int,
                         workers: int | None = None) -> np.ndarray:
        """Draw a ``(paths, cols)`` array of iid standard normals.

        The array content depends only on ``(seed, key, paths, cols)``; the
        worker count affects scheduling, never values.
        """
        if paths < 1 or cols < 0:
            raise ValueError("need paths >= 1 and cols >= 0")
        out = np.empty((paths, cols))
        nblocks = (paths + BLOCK_SIZE - 1) // BLOCK_SIZE

        def fill(block: int) -> None:
            lo = block * BLOCK_SIZE
            hi = min(lo + BLOCK_SIZE, paths)
            out[lo:hi] = self.block_rng(block).standard_normal((hi - lo, cols))

        nworkers = worker_count(workers)
        if nworkers == 1 or nblocks == 1:
            for b in range(nblocks):
                fill(b)
        else:
            with ThreadPoolExecutor(max_workers=nworkers) as pool:
                list(pool.map(fill, range(nblocks)))
        return out

    def __repr__(self) -> str:  # pragma: no cover
        return f"RandomStream(seed={self.seed}, key={self.key})"
