"""Named random streams derived from one master seed.

``stream(seed, "eval", 3)`` always yields the same generator, independent of
which other streams were created or in what order, so parallel workers cannot
perturb each other's randomness.
"""

from __future__ import annotations

import random
import zlib
from typing import Union

import numpy as np

Part = Union[str, int]


def _key(part: Part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if part < 0:
        raise ValueError("stream indices must be non-negative")
    return int(part)


def derive_seed(seed: int, *path: Part) -> int:
    """A 64-bit seed for the stream named by ``path`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(p) for p in path))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(hi) << 32 | int(lo)


def stream(seed: int, *path: Part) -> random.Random:
    return random.Random(derive_seed(seed, *path))
