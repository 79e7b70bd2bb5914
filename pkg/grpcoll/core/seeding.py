"""
Seeded random streams.

Every stream is numpy's ``Generator`` over PCG64, seeded with a 64-bit
unsigned integer. Independent streams for participants or parallel tasks
are split off with ``SeedSequence.spawn``; no generator is shared between
tasks.
"""

from typing import List

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def spawn_seeds(seed: int, count: int) -> List[int]:
    """Derive ``count`` independent 64-bit seeds from one base seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]
