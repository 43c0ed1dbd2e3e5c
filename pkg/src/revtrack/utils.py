"""Small shared helpers."""

import os
from concurrent.futures import ThreadPoolExecutor


def resolve_threads(cli_value=None):
    """Worker cap: explicit flag, else REVTRACK_THREADS, else 1."""
    if cli_value:
        return max(1, int(cli_value))
    env = os.environ.get("REVTRACK_THREADS")
    return max(1, int(env)) if env else 1


def parallel_map(fn, items, threads=1):
    """Order-preserving map, optionally over a bounded thread pool."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
