"""Ordered thread-pool map.

Kernels release the GIL, so threads give real parallelism. Results are
returned in task order so any reduction is independent of worker count.
"""

from concurrent.futures import ThreadPoolExecutor


def ordered_map(fn, tasks, threads: int = 1):
    tasks = list(tasks)
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))
