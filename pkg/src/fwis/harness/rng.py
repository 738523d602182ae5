"""Counter-based random streams.

A stream is keyed by ``(master_seed, stream_id, block_index)`` and feeds a
Philox generator, so any block of paths can be regenerated in isolation and
the assignment of blocks to workers never changes the numbers drawn.
"""

from __future__ import annotations

import zlib

import numpy as np

SEED_BITS = 64


def stream_id(name: str) -> int:
    """Stable 32-bit id for a named task (CRC-32 of its name)."""
    return zlib.crc32(name.encode("utf-8"))


def block_rng(master_seed: int, stream: int, block: int) -> np.random.Generator:
    if not 0 <= master_seed < 2**SEED_BITS:
        raise ValueError(f"master seed must be a {SEED_BITS}-bit unsigned integer")
    ss = np.random.SeedSequence(master_seed, spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.Philox(ss))
