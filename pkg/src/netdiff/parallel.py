"""Per-replication random streams and an order-independent replication runner.

Every replication gets its own counter-based Philox stream keyed by
``(master_seed, stream_tag, replication_index)``.  Results are returned in
replication order whatever the worker count, so reductions over them are
bit-for-bit reproducible.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

RNG_NAME = f"numpy.random.Philox (numpy {np.__version__})"

# stream tags keep different experiment roles from sharing draws
STREAM_REPLICATION = 0
STREAM_ERROR_GRAPH = 1
STREAM_SETUP = 2


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for the key path ``keys`` under master ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def _run_chunk(fn, seed, tag, start, stop):
    return [fn(i, stream(seed, tag, i)) for i in range(start, stop)]


def replicate(fn, reps: int, seed: int, *, threads: int = 1, tag: int = STREAM_REPLICATION) -> list:
    """Evaluate ``fn(index, rng)`` for ``index in range(reps)``.

    ``fn`` must be picklable (a module-level function or a ``functools.partial``
    of one) when ``threads > 1``; work is then spread over a process pool.
    """
    reps = int(reps)
    if reps <= 0:
        return []
    threads = max(1, int(threads or 1))
    if threads == 1 or reps == 1:
        return _run_chunk(fn, seed, tag, 0, reps)
    nchunks = min(reps, threads * 4)
    bounds = np.linspace(0, reps, nchunks + 1).astype(int)
    out: list = []
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(_run_chunk, fn, seed, tag, int(a), int(b))
            for a, b in zip(bounds[:-1], bounds[1:])
            if b > a
        ]
        for fut in futures:
            out.extend(fut.result())
    return out


def default_threads() -> int:
    env = os.environ.get("NETDIFF_THREADS")
    return int(env) if env else 1
