"""Deterministic random streams derived from string-keyed contexts.

Every randomized operation owns a stream derived from the global seed plus
its context ids, so results do not depend on scheduling or worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stable_token(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")


def derive_rng(seed: int, *context: str) -> np.random.Generator:
    entropy = [seed & 0xFFFFFFFFFFFFFFFF] + [stable_token(c) for c in context]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
