"""Counter-based random streams.

Every random draw in the package comes from a Philox generator whose key is
``(master_seed, trajectory_index)`` and whose counter starts at
``step_index`` in its most significant word.  A stream can therefore be
rebuilt for any (trajectory, step) pair without replaying earlier draws, and
results never depend on how trajectories are scheduled across threads.
Within one step block, draws are taken in a fixed mode order.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if seed < 0 or seed > _MASK64:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return seed


def stream(seed: int, trajectory: int, step: int = 0) -> np.random.Generator:
    """Generator for the block ``(seed, trajectory, step)``."""
    key = np.array([check_seed(seed), int(trajectory) & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, 0, int(step) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def normals(seed: int, trajectory: int, step: int, shape) -> np.ndarray:
    return stream(seed, trajectory, step).standard_normal(shape)
