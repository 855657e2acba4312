"""Deterministic seed derivation for nested, parallel-safe RNG streams."""

from __future__ import annotations

import zlib

import numpy as np

_MASK = (1 << 32) - 1


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & _MASK
    return zlib.crc32(str(tag).encode("utf-8")) & _MASK


def derive_seed(master_seed: int, *tags) -> int:
    """Stable 63-bit seed from (master seed, tags...), independent of call order."""
    ss = np.random.SeedSequence([int(master_seed) & _MASK, *map(_tag_to_int, tags)])
    state = ss.generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1] & 0x7FFFFFFF) << 32)


def rng_for(master_seed: int, *tags) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, *tags))
