"""Stream-splitting seeds: every random object derives from (seed, tag, index...)."""

from __future__ import annotations

import zlib

import numpy as np

_U64 = (1 << 64) - 1


def _entropy(seed: int, *parts) -> list[int]:
    words = [int(seed) & _U64]
    for part in parts:
        if isinstance(part, str):
            words.append(zlib.crc32(part.encode("utf-8")))
        else:
            words.append(int(part) & _U64)
    return words


def derive_rng(seed: int, *parts) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(_entropy(seed, *parts)))


def derive_seed(seed: int, *parts) -> int:
    """A 63-bit child seed; stable across runs and platforms."""
    state = np.random.SeedSequence(_entropy(seed, *parts)).generate_state(1, dtype=np.uint64)
    return int(state[0] >> np.uint64(1))
