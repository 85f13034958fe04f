"""Counter-based random streams.

All randomness in the package flows through `stream(seed, role, sub)`:
a Philox generator keyed by the user seed, a fixed role tag, and an
optional substream index. Streams for distinct (role, sub) pairs are
independent, so e.g. adding bootstrap replicates can never perturb the
design draws, and replicate b is reproducible in isolation.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np


class Role(IntEnum):
    DESIGN_A = 1
    DESIGN_B = 2
    BOOTSTRAP = 3
    EPSILON = 4
    ANNEAL = 5
    SNAPSHOTS = 6


_SUB_BITS = 48


def stream(seed: int, role: int, sub: int = 0) -> np.random.Generator:
    """Independent generator for (seed, role, sub).

    seed may be any Python int; it is folded into 64 bits. sub must fit
    in 48 bits, which covers any realistic replicate count.
    """
    if not 0 <= sub < (1 << _SUB_BITS):
        raise ValueError(f"substream index out of range: {sub}")
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64((int(role) << _SUB_BITS) | sub)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
