from __future__ import annotations

import numpy as np


def as_seedseq(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def child_seeds(seed, n: int) -> list[np.random.SeedSequence]:
    """``n`` independent children of ``seed``.

    Unlike ``SeedSequence.spawn`` this does not advance any counter, so the
    same parent always yields the same children.
    """
    ss = as_seedseq(seed)
    return [
        np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (i,), pool_size=ss.pool_size)
        for i in range(n)
    ]
