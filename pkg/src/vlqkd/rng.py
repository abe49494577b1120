"""Counter-based random streams keyed by (master seed, task index)."""
from __future__ import annotations

from typing import Sequence

import numpy as np


def generator(seed: int | Sequence[int]) -> np.random.Generator:
    """A Philox stream for ``seed``; tuples like (master, trial) give independent streams."""
    key = [int(s) for s in seed] if isinstance(seed, (tuple, list)) else [int(seed)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def task_generator(master: int, *path: int) -> np.random.Generator:
    return generator((master, *path))
