"""Order-preserving map over independent jobs."""

from concurrent.futures import ThreadPoolExecutor


def parallel_map(fn, items, threads=1):
    """``[fn(x) for x in items]``, optionally on a thread pool.

    Results come back in input order whatever the thread count, and each job
    owns its own seeds, so the output does not depend on ``threads``.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
