"""Seeded random streams.

Every stochastic component draws from its own Philox stream derived from the
single config seed and a role name, so adding draws in one role never shifts
another role's sequence.
"""

import zlib

import numpy as np


def role_key(role: str) -> int:
    return zlib.crc32(role.encode("utf-8"))


def make_rng(seed: int, role: str) -> np.random.Generator:
    """Return a Philox generator for (seed, role)."""
    seq = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, role_key(role)])
    return np.random.Generator(np.random.Philox(seq))
