"""Deterministic seed-stream derivation.

Every random process derives its own stream from the experiment's single
root seed plus a role string, so adding or reordering consumers never
perturbs the draws of another stream.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root_seed: int, role: str) -> int:
    """Stable 64-bit stream seed for (root_seed, role)."""
    digest = hashlib.sha256(f"{int(root_seed)}:{role}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream(root_seed: int, role: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root_seed, role))
