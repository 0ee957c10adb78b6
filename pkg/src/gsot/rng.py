"""Seeded random streams.

Every random draw in the package goes through a ``numpy`` Generator backed
by PCG64 (the 64-bit permuted congruential generator), so a seed pins all
outputs.
"""

import numpy as np


def make_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def child_seed(rng):
    """Draw a seed for an independent sub-stream."""
    return int(rng.integers(0, 2**63 - 1))
