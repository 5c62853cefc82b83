"""Per-sample random substreams.

Sample ``i`` of a Monte Carlo run draws its base sequence and fiber point
from a generator keyed by ``(seed, i)`` alone, so results never depend on
how samples are split across workers.
"""

from __future__ import annotations

import numpy as np

from .dynamics import BaseEnvironment, RandomSystem


def substream(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed) % 2**64, spawn_key=(int(index),)))


def sample_base_and_point(sys: RandomSystem, seed: int, index: int) -> tuple[BaseEnvironment, int, float]:
    """A base drawn from P (fresh master seed), position 0, and x uniform on the circle."""
    rng = substream(seed, index)
    base_seed = int(rng.integers(0, 2**63))
    x = float(rng.random())
    return sys.base.reseeded(base_seed), 0, x
