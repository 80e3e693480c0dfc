"""
Seed derivation and the named random generator.

All randomness in a run flows from one 64-bit seed. Sub-streams are derived
with blake2b so they do not depend on Python's salted ``hash``.
"""
import hashlib

import numpy as np

RNG_ALGORITHM = "numpy.PCG64"

_MASK64 = (1 << 64) - 1


def stable_hash64(text: str) -> int:
    """First 8 bytes (little endian) of blake2b over the UTF-8 text"""
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(base: int, label: str) -> int:
    """Derive a named sub-seed from the global seed"""
    return stable_hash64(f"{int(base) & _MASK64}:{label}")


def cycle_noise_seed(noise_seed: int, cycle_id: str, realization: int) -> int:
    """Per-cycle noise seed: noise seed XOR hash of (cycle id, realization)"""
    return (int(noise_seed) & _MASK64) ^ stable_hash64(f"{cycle_id}:{int(realization)}")


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator using the algorithm recorded in run metadata"""
    return np.random.Generator(np.random.PCG64(int(seed) & _MASK64))
