"""Named deterministic random streams derived from a single master seed.

Every stochastic subsystem (environment, network init, exploration noise,
replay sampling) pulls from its own labelled stream, so changing how one
subsystem consumes randomness never shifts the draws seen by another.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_seed(master: int, *labels) -> np.random.SeedSequence:
    """Derive a child SeedSequence from ``master`` and a label path.

    Labels are hashed with blake2s so the derivation is stable across
    processes and platforms (the builtin ``hash`` is salted per process).
    """
    key = "/".join(str(part) for part in labels)
    digest = hashlib.blake2s(key.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.SeedSequence([int(master) & 0xFFFFFFFF] + words)


def stream_rng(master: int, *labels) -> np.random.Generator:
    """A fresh Generator for the named stream."""
    return np.random.default_rng(stream_seed(master, *labels))
