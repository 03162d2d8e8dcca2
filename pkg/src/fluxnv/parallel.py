"""Ordered parallel map used by the sweep drivers."""

from concurrent.futures import ThreadPoolExecutor


def parallel_map(fn, items, threads: int = 1):
    """``[fn(x) for x in items]``, optionally on a thread pool.

    Results come back in input order whatever the thread count, so the
    merged output does not depend on scheduling.
    """
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
