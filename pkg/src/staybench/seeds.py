"""Deterministic RNG derivation: one root seed, per-stage per-agent streams.

Streams are derived through ``numpy.random.SeedSequence`` with a fixed stage
id so any stage (or any single agent within a stage) can be regenerated
independently and in any order.
"""

from __future__ import annotations

import numpy as np

STAGE_IDS = {
    "world": 1,
    "population": 2,
    "chains": 3,
    "assign": 4,
    "realize": 5,
    "inject": 6,
    "corrupt": 7,
    "reference": 8,
}


def stage_rng(seed: int, stage: str, agent_id: int | None = None) -> np.random.Generator:
    key = [int(seed), STAGE_IDS[stage]]
    if agent_id is not None:
        key.append(int(agent_id))
    return np.random.default_rng(np.random.SeedSequence(key))


class BufferedSampler:
    """Block-buffered uniform/normal draws; ~10x faster than scalar calls."""

    def __init__(self, rng: np.random.Generator, block: int = 512):
        self._rng = rng
        self._block = block
        self._uni = rng.random(block)
        self._ui = 0
        self._norm = rng.standard_normal(block)
        self._ni = 0

    def uniform(self) -> float:
        if self._ui >= self._uni.shape[0]:
            self._uni = self._rng.random(self._block)
            self._ui = 0
        v = self._uni[self._ui]
        self._ui += 1
        return float(v)

    def normal(self) -> float:
        if self._ni >= self._norm.shape[0]:
            self._norm = self._rng.standard_normal(self._block)
            self._ni = 0
        v = self._norm[self._ni]
        self._ni += 1
        return float(v)
