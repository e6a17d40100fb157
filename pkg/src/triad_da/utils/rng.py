"""
Keyed, counter-based random streams.

Every random draw in the package comes from a Philox generator whose key is
derived from (master seed, purpose, indices...). Results therefore depend on
the seed and on the identity of the object that consumes the stream, never
on execution order or the number of worker processes.
"""

from enum import IntEnum

import numpy as np


class StreamPurpose(IntEnum):
    """Tags separating the independent uses of one master seed."""
    NOISE = 1
    INITIAL = 2
    OBSERVATION = 3
    RESAMPLE = 4
    RANK_TIES = 5
    RUN = 6
    CELL = 7


def stream(master_seed: int, purpose: StreamPurpose, *indices: int) -> np.random.Generator:
    """Return the generator keyed by ``(master_seed, purpose, *indices)``."""
    if master_seed < 0:
        raise ValueError(f"master seed must be non-negative, got {master_seed}")
    entropy = [int(master_seed), int(purpose)] + [int(i) for i in indices]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(master_seed: int, purpose: StreamPurpose, *indices: int) -> int:
    """Derive a child master seed (63-bit) for a run or a grid cell."""
    entropy = [int(master_seed), int(purpose)] + [int(i) for i in indices]
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0]
    return int(state >> np.uint64(1))
