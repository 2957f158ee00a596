"""
Named counter-based random streams.

A stream is fully determined by (seed, name, *indices), so a resumed run
re-derives the same shuffles without serialising generator internals.
"""

from __future__ import annotations

import hashlib
from typing import Tuple

import numpy as np


def _name_word(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:4], "little")


def stream_key(seed: int, name: str, *indices: int) -> Tuple[int, ...]:
    return (int(seed) & 0xFFFFFFFF, _name_word(name), *(int(i) & 0xFFFFFFFF for i in indices))


def stream(seed: int, name: str, *indices: int) -> np.random.Generator:
    seq = np.random.SeedSequence(list(stream_key(seed, name, *indices)))
    return np.random.Generator(np.random.Philox(seq))


def stream_digest(seed: int, name: str, *indices: int) -> str:
    key = ",".join(str(k) for k in stream_key(seed, name, *indices))
    return hashlib.sha256(f"philox:{key}".encode("ascii")).hexdigest()[:16]
