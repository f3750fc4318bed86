"""Order-preserving process-pool map with deterministic per-task seeding."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Sequence

import numpy as np

# spawn-key prefixes keep the independent streams of one master seed apart
STREAM_CATALOG = 0
STREAM_DRAW = 1
STREAM_EVAL = 2
STREAM_ROLLOUT = 3

_context: Any = None


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def _init(ctx):
    global _context
    _context = ctx


def _call(args):
    fn, item = args
    return fn(_context, item)


def context_map(fn: Callable[[Any, Any], Any], context: Any, items: Sequence[Any], workers: int = 1) -> list:
    """``[fn(context, x) for x in items]``, optionally over ``workers`` processes.

    ``context`` is shipped once per worker. Results come back in input order,
    so the output does not depend on ``workers``.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(context, x) for x in items]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init, initargs=(context,)) as ex:
        chunk = max(1, len(items) // (4 * workers))
        return list(ex.map(_call, [(fn, x) for x in items], chunksize=chunk))
