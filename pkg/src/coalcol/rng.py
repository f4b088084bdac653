"""Deterministic random-stream derivation.

All Monte Carlo in this package draws from substreams derived from a
single user seed through ``numpy``'s ``SeedSequence`` spawn-key
mechanism.  A substream is identified by a tuple of nonnegative
integers (for simulations: the start state and the replicate index), so
replicate r always sees the same stream no matter how replicates are
distributed over workers.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for substream ``key`` of the given seed.

    The same ``(seed, key)`` pair always yields an identical stream;
    distinct keys yield statistically independent streams.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))
