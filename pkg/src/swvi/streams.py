"""Seeded random streams and deterministic chunked parallelism.

Every random draw in a run comes from a generator keyed by
``(seed, purpose, index)``, so results never depend on call order elsewhere
in the program. Per-particle work is split into fixed-size chunks; the number
of worker threads only changes who computes a chunk, never its contents.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

# stream purposes
INIT = 0
KERNEL = 1
FAMILY = 2
PROJECTIONS = 3
ELBO = 4

CHUNK_ROWS = 256
THREADS_ENV = "SWVI_THREADS"


def stream(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, purpose, index)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(purpose), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def worker_count() -> int:
    """Thread cap from ``SWVI_THREADS`` (unset or 0 means all cores)."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if n < 0:
        raise ValueError(f"{THREADS_ENV} must be >= 0, got {n}")
    return n if n > 0 else (os.cpu_count() or 1)


def map_rows(fn: Callable[[np.ndarray], np.ndarray], rows: np.ndarray) -> np.ndarray:
    """Apply ``fn`` to fixed row chunks of ``rows`` and concatenate.

    Chunk boundaries depend only on ``len(rows)``, so output is bit-identical
    for any thread count.
    """
    n = rows.shape[0]
    if n <= CHUNK_ROWS:
        return np.asarray(fn(rows))
    bounds = [(s, min(s + CHUNK_ROWS, n)) for s in range(0, n, CHUNK_ROWS)]
    workers = min(worker_count(), len(bounds))
    if workers <= 1:
        parts = [fn(rows[a:b]) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda ab: fn(rows[ab[0]:ab[1]]), bounds))
    return np.concatenate([np.asarray(p) for p in parts], axis=0)
