"""Counter-based random streams with documented derivation.

Every stream is a Philox generator keyed by ``(seed, purpose, *indices)``
through :class:`numpy.random.SeedSequence`.  Philox output is defined by the
algorithm, not the platform, so a given key reproduces the same draws
everywhere.  Scenario runners split trials into fixed-size blocks and derive
one stream per (purpose, block); the draws a trial sees therefore do not
depend on how blocks are spread over workers.
"""
from __future__ import annotations

import zlib

import numpy as np

BLOCK_SIZE = 8192


def _purpose_code(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


class RngStream:
    """Thin wrapper over a Philox generator; one ``uniform()`` is one draw."""

    def __init__(self, seed: int, purpose: str = "default", *indices: int):
        if seed is None:
            raise ValueError("seed is required")
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.key = (self.seed, _purpose_code(purpose), *(int(i) for i in indices))
        self.purpose = purpose
        self.generator = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.key)))
        self.draws = 0

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, purpose={self.purpose!r}, draws={self.draws})"

    def uniform(self) -> float:
        self.draws += 1
        return float(self.generator.random())

    def uniforms(self, shape) -> np.ndarray:
        """Vector of draws, identical to the same number of successive ``uniform()`` calls."""
        out = self.generator.random(shape)
        self.draws += out.size
        return out


def block_stream(seed: int, purpose: str, block: int, *extra: int) -> RngStream:
    return RngStream(seed, purpose, *extra, block)


def blocks(n: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int, int]]:
    """Split ``n`` trials into ``(block_index, first_trial, count)`` triples."""
    return [(i, start, min(block_size, n - start)) for i, start in enumerate(range(0, n, block_size))]
