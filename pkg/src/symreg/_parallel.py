"""Deterministic fan-out of independent work items."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def run_chunks(fn, chunks, threads: int = 1):
    """Apply ``fn`` to each chunk and return results in chunk order.

    Work is split into chunks by the caller, independently of ``threads``,
    so the output never depends on the number of workers.
    """
    chunks = list(chunks)
    if threads <= 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))
