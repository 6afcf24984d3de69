"""Deterministic chunked Monte Carlo.

Work is cut into fixed-size chunks, each with its own RNG stream spawned
from one master seed. Results are reassembled in chunk order, so the output
does not depend on how many workers ran.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Optional

import numpy as np

CHUNK = 8192


def worker_count(requested: Optional[int] = None) -> int:
    env = os.environ.get("ERGOMIX_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    if requested:
        return max(1, int(requested))
    return os.cpu_count() or 1


def chunk_sizes(total: int, chunk: int = CHUNK) -> List[int]:
    sizes = [chunk] * (total // chunk)
    if total % chunk:
        sizes.append(total % chunk)
    return sizes


def run_chunks(fn: Callable, total: int, seed: int, *, workers: Optional[int] = None,
               chunk: int = CHUNK, args: tuple = ()) -> list:
    """Call ``fn(size, seed_sequence, *args)`` on every chunk; results in chunk order.

    ``fn`` must be a picklable module-level function when more than one
    worker is used.
    """
    sizes = chunk_sizes(total, chunk)
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    nw = min(worker_count(workers), len(sizes))
    if nw <= 1:
        return [fn(sz, ss, *args) for sz, ss in zip(sizes, seqs)]
    with ProcessPoolExecutor(max_workers=nw) as ex:
        futs = [ex.submit(fn, sz, ss, *args) for sz, ss in zip(sizes, seqs)]
        return [f.result() for f in futs]
