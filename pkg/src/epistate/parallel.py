"""Order-preserving map with an optional thread pool.

Work items are independent and results are collected by input position,
so the output is identical for any degree of parallelism.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def parallel_map(fn, items, jobs: int = 1) -> list:
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))
