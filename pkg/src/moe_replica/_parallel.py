import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "MOE_REPLICA_THREADS"


def thread_count() -> int:
    """Worker cap from ``MOE_REPLICA_THREADS``; 0 or unset means one per CPU."""
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError(f"{THREADS_ENV} must be >= 0, got {n}")
    return n or (os.cpu_count() or 1)


def ordered_map(fn, items):
    """``list(map(fn, items))``, possibly on a thread pool; results keep input order."""
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
