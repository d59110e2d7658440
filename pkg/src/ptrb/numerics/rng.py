"""Named, reproducible random streams.

Streams use the Philox counter-based generator keyed by a seed sequence,
so a given ``(seed, *keys)`` yields the same numbers on every platform.
"""

import zlib

import numpy as np


def _key(k):
    if isinstance(k, str):
        return zlib.crc32(k.encode())
    return int(k)


def stream(seed, *keys):
    """Independent generator for ``seed`` and a path of string/int keys."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF] + [_key(k) for k in keys])
    return np.random.Generator(np.random.Philox(ss))
