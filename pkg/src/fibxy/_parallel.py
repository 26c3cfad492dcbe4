"""Index-ordered fan-out used by sweeps.

Results are assembled by input position, so outputs do not depend on the
worker count or on completion order.
"""

from concurrent.futures import ThreadPoolExecutor


def ordered_map(func, items, jobs: int = 1) -> list:
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))
