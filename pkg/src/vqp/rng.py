"""Named, seeded random streams.

Every stochastic step draws from ``stream(seed, name, *extra)`` so results do
not depend on call order or on how work is split across processes.
"""

import zlib

import numpy as np


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode())


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream_key(name), *(int(e) for e in extra)])
