"""Replica-parallel execution with worker-count independent results.

Each replica is a pure function of its index, so the coordinator only has to
put the returned rows back in index order.
"""
from __future__ import annotations

import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from functools import partial

import numpy as np


def _run_chunk(fn, kwargs, start, stop):
    return [fn(i, **kwargs) for i in range(start, stop)]


def map_replicas(fn, n: int, workers: int = 1, chunks_per_worker: int = 4, **kwargs) -> np.ndarray:
    """Evaluate ``fn(i, **kwargs)`` for ``i < n``; rows are returned in index order."""
    if n <= 0:
        return np.empty(0)
    if workers <= 1 or n == 1:
        rows = _run_chunk(fn, kwargs, 0, n)
    else:
        n_chunks = min(n, workers * chunks_per_worker)
        bounds = np.linspace(0, n, n_chunks + 1).astype(int)
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            parts = pool.map(partial(_run_chunk, fn, kwargs), bounds[:-1], bounds[1:])
            rows = [row for part in parts for row in part]
    return np.asarray(rows, dtype=float)
