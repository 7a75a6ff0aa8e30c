"""Seed derivation for reproducible replica ensembles.

One root seed per run. Replica r draws from an independent stream whose
seed is ``root XOR splitmix64(r + 1)``; every random quantity of a replica
(exponential waits, uniform picks, Gaussian offsets) is consumed from that
single stream in the fixed order documented in the engine, so logs are
bit-reproducible per (root seed, replica index).
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One step of the splitmix64 sequence (Steele et al. constants)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def replica_seed(root_seed: int, replica: int) -> int:
    """Derive the stream seed of one replica from the root seed."""
    return (root_seed & _MASK) ^ splitmix64(replica + 1)


def make_stream(root_seed: int, replica: int = 0) -> np.random.Generator:
    """Independent, reproducible generator for one replica."""
    return np.random.default_rng(replica_seed(root_seed, replica))
