"""Deterministic seed derivation.

All randomness in a run flows from one top-level seed.  Subsystems get
their own streams via ``split_seed``, which hashes (seed, label) with
SHA-256 so the derivation is stable across platforms and Python builds
(unlike ``hash()``).
"""

import hashlib

import numpy as np


def split_seed(seed: int, label: str) -> int:
    """Derive an independent 63-bit child seed from ``seed`` and a label."""
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def rng_for(seed: int, label: str) -> np.random.Generator:
    """Generator seeded by the (seed, label) split."""
    return np.random.Generator(np.random.PCG64(split_seed(seed, label)))
