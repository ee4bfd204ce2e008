"""Deterministic seed derivation.

Everything random in the package flows from sha256 over explicit
string parts, never from Python's salted hash, so runs agree across
processes and platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*parts):
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def seeded_rng(*parts):
    return np.random.Generator(np.random.PCG64(derive_seed(*parts)))
