"""
Counter-based seed derivation.

Every random stream in a run is addressed by (root seed, purpose, counters...),
so the order in which concurrent work completes never changes what is drawn.
"""

from typing import Union

import numpy as np

SeedLike = Union[int, np.random.Generator]

# Stream purposes
ACQUIRE = 1
ESTIMATE = 2
SAMPLE = 3
NOISE = 4
VALIDATE = 5

_MASK64 = (1 << 64) - 1


def derive_seed(root: int, *counters: int) -> int:
    """Returns a 63-bit seed derived from the root seed and integer counters."""
    entropy = [int(root) & _MASK64] + [int(c) & _MASK64 for c in counters]
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)
    return int(state[0]) >> 1


def derive_rng(root: int, *counters: int) -> np.random.Generator:
    entropy = [int(root) & _MASK64] + [int(c) & _MASK64 for c in counters]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return derive_rng(seed)
