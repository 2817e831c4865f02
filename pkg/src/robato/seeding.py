"""Deterministic seed derivation.

All randomness in a pipeline run flows from a single root seed. Component
streams (fold splits, benchmark replications, ...) derive child seeds by
hashing the component name into a ``numpy.random.SeedSequence`` together
with the root seed, so adding or reordering components never shifts the
streams of the others.
"""

from __future__ import annotations

import zlib

import numpy as np


def child_rng(root_seed: int, name: str, *indices: int) -> np.random.Generator:
    """Generator for the component ``name`` derived from ``root_seed``.

    Extra integer ``indices`` (fold number, replication number, ...) extend
    the derivation key so per-item streams are independent.
    """
    key = zlib.crc32(name.encode("utf-8"))
    seq = np.random.SeedSequence([int(root_seed) & 0xFFFFFFFF, key, *indices])
    return np.random.default_rng(seq)


def child_seed(root_seed: int, name: str, *indices: int) -> int:
    """Plain integer seed for APIs that take one (same derivation as child_rng)."""
    key = zlib.crc32(name.encode("utf-8"))
    seq = np.random.SeedSequence([int(root_seed) & 0xFFFFFFFF, key, *indices])
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> 1)
