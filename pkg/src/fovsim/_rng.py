"""Deterministic, platform-stable RNG derivation.

All randomness in the engine descends from explicit integer seeds. Child
streams are derived with SeedSequence spawn keys built from SHA-256 of the
labels, never from Python's salted hash(), so identical (seed, labels)
produce identical streams on every platform and in any execution order.
"""

from __future__ import annotations

import hashlib

import numpy as np

_U64 = (1 << 64) - 1


def _label_words(label: object) -> tuple[int, int]:
    digest = hashlib.sha256(repr(label).encode("utf-8")).digest()
    return (
        int.from_bytes(digest[:4], "big"),
        int.from_bytes(digest[4:8], "big"),
    )


def derive_rng(seed: int, *labels: object) -> np.random.Generator:
    """Independent generator for (seed, labels); safe to fan out in parallel."""
    key = tuple(w for label in labels for w in _label_words(label))
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed) & _U64, spawn_key=key))


def derive_seed(seed: int, *labels: object) -> int:
    """Stable 63-bit child seed (nonnegative, fits common integer columns)."""
    rng = derive_rng(seed, *labels)
    return int(rng.integers(0, 1 << 63))
