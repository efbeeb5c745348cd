"""Order-independent random streams.

Every path draws from its own Philox stream. The key comes from the master
seed and a purpose tag; the path index is placed in the top 64 bits of the
256-bit counter, so streams of different paths never overlap and an
ensemble can be generated in any order or in parallel.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

# purpose tags
FBM = 1
HISTORY = 2
FORWARD = 3
TAIL = 4
AUDIT = 5
BOOTSTRAP = 6
INNER = 7


@lru_cache(maxsize=256)
def _key(seed, purpose):
    return tuple(int(k) for k in np.random.SeedSequence([int(seed) & (2**64 - 1), int(purpose)]).generate_state(2, np.uint64))


def stream(seed, index=0, purpose=0):
    """Generator for path ``index`` of the run identified by ``seed``."""
    key = np.array(_key(seed, purpose), dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=int(index) << 192))


def normals(seed, indices, shape, purpose=0):
    """Stack of standard normals, one block of ``shape`` per path index."""
    indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    out = np.empty((len(indices),) + tuple(shape))
    for row, idx in enumerate(indices):
        out[row] = stream(seed, idx, purpose).standard_normal(shape)
    return out
