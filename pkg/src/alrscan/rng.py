"""Reproducible random streams and a deterministic replicate runner.

Every stream is a PCG64 generator seeded from ``SeedSequence(seed,
spawn_key=key)``, so a stream depends only on the master seed and its key and
never on scheduling.  Monte Carlo loops draw replicates in fixed blocks of
:data:`BLOCK`; block ``b`` of a stage uses key ``(*stage, b)``.  Results are
therefore identical for any thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

BLOCK = 1024

T = TypeVar("T")


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))
    )


def blocks(L: int, block: int = BLOCK) -> list[tuple[int, int, int]]:
    """``(block_index, start, count)`` triples covering replicates ``0..L-1``."""
    return [(b, s, min(block, L - s)) for b, s in enumerate(range(0, L, block))]


def default_threads() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1


def map_ordered(fn: Callable[..., T], items: Sequence, threads: int | None = None) -> list[T]:
    """``[fn(x) for x in items]`` on a thread pool; output order follows ``items``."""
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
