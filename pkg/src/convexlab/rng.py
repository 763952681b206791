"""Deterministic, splittable random streams.

All randomness in the library flows from :class:`RngSpec`, a (seed, stream id)
pair keying a Philox counter-based bit generator.  Draws are a pure function
of (seed, stream_id, draw index), so every Monte Carlo routine is bit
reproducible regardless of scheduling: parallel work units each own a
substream derived by hashing their index into the stream id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    """One round of the splitmix64 mixer (Steele, Lea, Flood constants)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class RngSpec:
    """A named random stream: (seed, stream_id) keys a Philox generator.

    Distinct (seed, stream_id) pairs give statistically independent streams;
    `substream` derives child stream ids by hashing integer indices, so a
    work unit (quadrature node, particle step, simulation phase) can be given
    its own stream independent of execution order.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at draw index 0 of this stream."""
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64],
                       dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, *indices: int) -> "RngSpec":
        """Child stream obtained by folding integer indices into the id."""
        sid = self.stream_id & _MASK64
        for ix in indices:
            sid = _splitmix64(sid ^ _splitmix64((int(ix) + 1) & _MASK64))
        return RngSpec(self.seed, sid)
