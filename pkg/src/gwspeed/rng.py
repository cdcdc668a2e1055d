"""Seed derivation.

Every replica derives its streams from ``(master_seed, replica_index, tag)``
through :class:`numpy.random.SeedSequence`, so results do not depend on how
replicas are distributed over workers. Compiled walks consume a SplitMix64
stream whose 64-bit state is such a derived key.
"""
from __future__ import annotations

import zlib

import numpy as np

SEED_BITS = 64


def _tag_word(tag: str) -> int:
    return zlib.crc32(tag.encode())


def stream_key(master_seed: int, index: int, tag: str) -> int:
    """64-bit key for stream ``tag`` of replica ``index``."""
    if not 0 <= master_seed < 2**SEED_BITS:
        raise ValueError(f"master seed must be a 64-bit unsigned integer, got {master_seed}")
    ss = np.random.SeedSequence([master_seed & 0xFFFFFFFF, master_seed >> 32,
                                 int(index), _tag_word(tag)])
    return int(ss.generate_state(1, np.uint64)[0])


def stream_state(master_seed: int, index: int, tag: str) -> np.uint64:
    return np.uint64(stream_key(master_seed, index, tag))


def generator(master_seed: int, index: int = 0, tag: str = "numpy") -> np.random.Generator:
    """numpy Generator for Python-level sampling."""
    return np.random.Generator(np.random.PCG64(stream_key(master_seed, index, tag)))
