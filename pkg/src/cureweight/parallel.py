"""Order-preserving map over worker processes."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

_CONTEXT = None


def _init(context):
    global _CONTEXT
    _CONTEXT = context


def _call(args):
    fn, item = args
    return fn(item, _CONTEXT)


def ordered_map(fn, items, workers: int = 1, context=None) -> list:
    """``[fn(x, context) for x in items]``, optionally over ``workers`` processes.

    ``context`` is shipped once per worker rather than once per item. Output
    order always follows ``items``, so downstream reductions are identical
    for any worker count.
    """
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(x, context) for x in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers, initializer=_init, initargs=(context,)) as pool:
        return list(pool.map(_call, [(fn, x) for x in items], chunksize=chunk))
