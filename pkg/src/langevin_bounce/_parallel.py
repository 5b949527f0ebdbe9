"""Worker-count resolution and a deterministic block map."""

import os
from concurrent.futures import ThreadPoolExecutor

from ._validation import DomainError

THREADS_ENV = "LANGEVIN_BOUNCE_THREADS"


def resolve_threads(threads=None):
    """Explicit value, else ``$LANGEVIN_BOUNCE_THREADS``, else 1."""
    if threads is None:
        raw = os.environ.get(THREADS_ENV, "").strip()
        if not raw:
            return 1
        try:
            threads = int(raw)
        except ValueError:
            raise DomainError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if isinstance(threads, bool) or int(threads) != threads or threads < 1:
        raise DomainError(f"thread count must be a positive integer, got {threads!r}")
    return int(threads)


def map_blocks(fn, items, threads=None):
    """``[fn(item) for item in items]``, optionally on a thread pool.

    Results come back in input order and every item carries its own RNG
    stream, so the output does not depend on the worker count.
    """
    threads = resolve_threads(threads)
    items = list(items)
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))
