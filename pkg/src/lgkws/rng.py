"""Deterministic random streams derived from one top-level seed.

Every consumer of randomness asks for a labeled stream, so adding or removing
one consumer never shifts the draws seen by another. Fallback word vectors use
a counter-based Philox generator keyed by a hash of (seed, word) so the same
numbers come out on any platform.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_entropy(labels: tuple) -> list[int]:
    text = "/".join(str(part) for part in labels)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def derive_rng(seed: int, *labels) -> np.random.Generator:
    """PCG64 stream for (seed, labels); identical inputs give identical draws."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + _label_entropy(labels)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def word_rng(seed: int, word: str) -> np.random.Generator:
    """Philox (counter-based, 64-bit) stream keyed by SHA-256(seed:word)."""
    digest = hashlib.sha256(f"{seed}:{word}".encode("utf-8")).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))
