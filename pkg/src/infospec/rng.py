"""Counter-based random substreams.

Every Monte Carlo consumer draws from Philox generators keyed by
(seed, stream-id) where the stream id is derived from a stable label.
Work is split into fixed-size chunks so results never depend on how
many workers processed them.
"""
from __future__ import annotations

import hashlib

import numpy as np

CHUNK = 1 << 15

_MASK64 = (1 << 64) - 1


def stream_id(*tokens) -> int:
    """Stable 64-bit id for a tuple of ints/strings (no Python hash())."""
    digest = hashlib.sha256(repr(tokens).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(seed: int, *tokens) -> np.random.Generator:
    """Generator for the substream identified by (seed, tokens)."""
    key = np.array([seed & _MASK64, stream_id(*tokens)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def chunks(total: int, chunk: int = CHUNK):
    """Yield (index, count) covering `total` samples in fixed-size chunks."""
    index = 0
    done = 0
    while done < total:
        count = min(chunk, total - done)
        yield index, count
        index += 1
        done += count
