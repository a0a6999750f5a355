"""Counter-based random streams keyed by seed and worker index."""

from __future__ import annotations

import os

import numpy as np

THREADS_ENV = "MECHLEARN_THREADS"


def stream(seed: int, worker: int = 0) -> np.random.Generator:
    """Philox generator whose key packs ``(seed, worker)``.

    Streams for different workers never overlap, so results depend only on
    the seed and the number of workers.
    """
    if seed < 0 or worker < 0:
        raise ValueError("seed and worker index must be nonnegative")
    key = (int(seed) & ((1 << 64) - 1)) << 64 | int(worker)
    return np.random.Generator(np.random.Philox(key=key))


def worker_count(default: int = 1) -> int:
    """Worker count from the environment, falling back to ``default``."""
    raw = os.environ.get(THREADS_ENV, "")
    try:
        value = int(raw)
    except ValueError:
        return default
    return max(1, value)
