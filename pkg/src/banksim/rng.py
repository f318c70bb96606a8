"""Reproducible random-number streams.

All stochastic code in this package draws from :class:`RngStream`, a thin
wrapper around numpy's counter-based Philox generator.  A stream is fully
identified by a 64-bit ``seed`` and a 64-bit ``stream_id``; distinct
stream ids give statistically independent streams, which lets ensembles
and particle systems run in parallel without sharing generator state.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(z: int) -> int:
    """One round of the splitmix64 mixer (used to derive stream ids)."""
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


class RngStream:
    """A sequential cursor over one Philox stream.

    Identical ``(seed, stream_id)`` pairs reproduce the exact same sample
    sequence; the underlying generator is counter-based, so streams with
    different ids never overlap.  Instances are cheap to create and must
    not be shared between threads concurrently.
    """

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed: int, stream_id: int = 0):
        if not (0 <= seed <= _MASK64 and 0 <= stream_id <= _MASK64):
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        key = (self.seed << 64) | self.stream_id
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def spawn(self, *indices: int) -> "RngStream":
        """Derive an independent child stream keyed by ``indices``.

        The child's stream id mixes this stream's id with each index via
        splitmix64, so e.g. ``stream.spawn(run)`` or
        ``stream.spawn(run, bank_id)`` are deterministic and disjoint.
        """
        sid = self.stream_id
        for ix in indices:
            sid = _splitmix64(sid ^ (int(ix) & _MASK64))
        return RngStream(self.seed, sid)

    # thin passthroughs to the numpy Generator

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def exponential(self, scale=1.0, size=None):
        return self._gen.exponential(scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def lognormal(self, mean=0.0, sigma=1.0, size=None):
        return self._gen.lognormal(mean, sigma, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def random(self, size=None):
        return self._gen.random(size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"
