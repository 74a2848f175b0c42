"""Seed derivation for schedule-independent random streams.

Every random draw in the package comes from a generator seeded by
``derive_seed(master, index, tag)``. The derivation only depends on its three
integer arguments, so a replicate produces the same numbers whether it runs
first, last, alone, or on another thread.

The mixing function is the SplitMix64 finalizer (Steele, Lea and Flood 2014)::

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)

applied as ``mix(mix(mix(master) ^ index) ^ tag)`` with the golden-gamma
increment ``0x9E3779B97F4A7C15`` added before each finalization. The 64-bit
result seeds a PCG64 bit generator.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

# stream tags; values are arbitrary but frozen
TAG_TIME = 0x54494D45  # "TIME": within-unit time resampling
TAG_UNIT = 0x554E4954  # "UNIT": cross-sectional unit resampling
TAG_BOOT = 0x424F4F54  # "BOOT": bootstrap master seed for one MC replication
TAG_DGP = 0x44475000  # "DGP": panel simulation for one MC replication
TAG_THETA = 0x54485441  # "THTA": heterogeneity draws


def splitmix64(z: int) -> int:
    z = (z + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, index: int, tag: int) -> int:
    """Return the 64-bit seed for stream ``tag`` of replicate ``index``."""
    z = splitmix64(int(master) & MASK64)
    z = splitmix64(z ^ (int(index) & MASK64))
    return splitmix64(z ^ (int(tag) & MASK64))


def make_rng(master: int, index: int, tag: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master, index, tag)))


def key_seed(master: int, key: str) -> int:
    """Fold a text key (e.g. a simulation cell label) into a master seed."""
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return splitmix64((int(master) & MASK64) ^ int.from_bytes(digest, "little"))


def fresh_seed() -> int:
    """A random 64-bit seed for runs where the caller supplied none."""
    return int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0])
