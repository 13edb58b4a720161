"""Seeded random streams.

Every random draw in the package comes from a numpy ``Generator`` backed by
Philox, a counter-based bit generator. A run owns one integer seed; named
sub-streams (``"data"``, ``"init"``, ``"shuffle"``, ...) are derived from it
with a stable CRC of the name, so changing how one stream is consumed never
perturbs another.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part: str | int) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def stream(seed: int, *names: str | int) -> np.random.Generator:
    """Return the generator for ``seed`` and the sub-stream path ``names``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(n) for n in names))
    return np.random.Generator(np.random.Philox(ss))
