"""Deterministic seed derivation so parallel tasks never share or depend on scheduling."""
from __future__ import annotations

import hashlib

import numpy as np


def _word(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    digest = hashlib.sha256(str(key).encode()).digest()
    return int.from_bytes(digest[:4], "little")


def derive_seed(base: int, *keys) -> int:
    """Map ``(base, *keys)`` to an independent 32-bit seed.

    Keys may be ints or strings, e.g. ``derive_seed(7, "replicate", 3)``.
    """
    entropy = [_word(base), *(_word(k) for k in keys)]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])
