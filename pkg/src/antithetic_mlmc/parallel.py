"""Deterministic chunked sampling over a thread pool."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

T = TypeVar("T")

# fixed so that the sample -> chunk map never depends on the worker count
CHUNK_SIZE = 1 << 13


def map_chunks(fn: Callable[[int, int], T], start: int, count: int,
               workers: int = 1, chunk_size: int = CHUNK_SIZE) -> list[T]:
    """Apply ``fn(lo, hi)`` to consecutive sample-index ranges, results in range order."""
    bounds = [(lo, min(lo + chunk_size, start + count))
              for lo in range(start, start + count, chunk_size)]
    if workers <= 1 or len(bounds) <= 1:
        return [fn(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))
