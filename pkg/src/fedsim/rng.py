"""Keyed deterministic random streams.

Every stochastic stage of the simulator draws from its own generator,
derived from the master seed plus integer tags identifying the stage
(e.g. (TRAIN, round, client_id)). Streams are therefore independent of
execution order and of how many worker threads consume them.
"""

from __future__ import annotations

import numpy as np

# Stage tags used as the leading spawn-key entry. Values are arbitrary
# but frozen: changing them changes every downstream result.
DATA = 0
TEST = 1
INIT = 2
TRAIN = 3
SELECT = 4
ESTIMATE = 5
PRETRAIN = 6
PROBE = 7


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for stage ``key`` of the run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)))


def derive(seed: int, *key: int) -> int:
    """A 64-bit sub-seed for stage ``key``, for APIs that take plain ints."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0])
