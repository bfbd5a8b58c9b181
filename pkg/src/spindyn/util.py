"""Small shared helpers: deterministic fan-out and seed derivation."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np


def deterministic_map(fn, items, workers: int = 1) -> list:
    """Apply ``fn`` to every item, returning results in item order.

    With ``workers > 1`` the items run on a thread pool (numpy releases
    the GIL in the heavy kernels); results are still collected by index,
    so the output, and any reduction over it, is independent of the
    worker count and of scheduling order.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, item) for item in items]
        return [f.result() for f in futures]


def derive_seed(base: int, *key: int) -> int:
    """Stable 64-bit sub-seed for (base, key...) streams."""
    ss = np.random.SeedSequence([int(base), *[int(k) for k in key]])
    return int(ss.generate_state(1, np.uint64)[0])


def fmt(x: float) -> str:
    """Float formatting that round-trips float64 exactly."""
    return f"{x:.17g}"
