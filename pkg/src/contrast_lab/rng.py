"""Deterministic, splittable random number state.

Randomness is always carried explicitly as an ``RngState`` value: a 64-bit
seed plus a 64-bit stream id.  Child streams are derived from string labels
via SHA-256, so "query-init", "key-init", "data", etc. are independent and
reproducible regardless of call order.  The underlying bit generator is
counter-based (Philox), keyed on (seed, stream), which makes every sequence
identical across platforms and runs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngState:
    seed: int
    stream: int = 0

    def child(self, label: str) -> "RngState":
        """Derive an independent named substream."""
        digest = hashlib.sha256(
            self.stream.to_bytes(8, "little") + label.encode("utf-8")
        ).digest()
        return RngState(self.seed, int.from_bytes(digest[:8], "little"))

    def generator(self) -> np.random.Generator:
        """Fresh generator for this (seed, stream); always starts at counter 0."""
        key = (self.seed & _MASK64) | ((self.stream & _MASK64) << 64)
        return np.random.Generator(np.random.Philox(key=key))
