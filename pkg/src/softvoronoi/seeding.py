"""Portable seeding.

Random streams come from numpy's Philox4x64-10 counter-based bit generator
keyed directly by a 64-bit integer (no SeedSequence hashing). Child seeds for
grid cells are derived with the SplitMix64 finalizer, chained over the
components in order.
"""
from __future__ import annotations

import numpy as np

BIT_GENERATOR = "Philox4x64-10 (numpy.random.Philox, key=seed)"
SEED_MIXER = "splitmix64 finalizer chain: h = mix(h ^ part) starting from h = mix(master)"

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """SplitMix64 output function: golden-ratio increment followed by the avalanche mix."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master: int, *parts: int) -> int:
    """Deterministic 64-bit child seed of ``master`` for the given index tuple."""
    h = splitmix64(int(master) & _MASK)
    for part in parts:
        h = splitmix64(h ^ (int(part) & _MASK))
    return h


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & _MASK))
