"""Counter-based random streams, one per (seed, purpose).

Streams are independent, so adding a consumer (e.g. a diagnostic) never
shifts the draws seen by another one.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, purpose: str) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(purpose.encode()),))
    return np.random.Generator(np.random.Philox(ss))
